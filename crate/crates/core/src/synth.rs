//! Synthetic test material.
//!
//! Hazy images follow the scattering model `I = J t + A (1 - t)` with a
//! per-image transmission `t` in `[0.3, 0.8]` and airlight `A = 0.9`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{save_image, RasterImage};

pub const AIRLIGHT: f64 = 0.9;
pub const T_MIN: f64 = 0.3;
pub const T_MAX: f64 = 0.8;

/// Gray image whose top `p` fraction of rows is constant 0.8 and whose
/// remaining rows are uniform noise in `[0, 1]`.
pub fn flat_band_image(width: usize, height: usize, p: f64, seed: u64) -> Result<RasterImage> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!(
            "band fraction must lie in [0, 1], got {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (p * height as f64).round() as usize;
    RasterImage::from_fn(
        width,
        height,
        1,
        |_, y, _| if y < rows { 0.8 } else { rng.gen() },
    )
}

/// Row index where the ground starts for a given sky fraction.
pub fn horizon_row(height: usize, sky_fraction: f64) -> usize {
    (sky_fraction * height as f64).round() as usize
}

#[derive(Clone, Copy, Debug)]
struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    colour: [f64; 3],
}

/// Haze-free RGB scene: a smooth pale-blue sky over the top `sky_fraction`
/// of rows and textured, coloured ground below.
pub fn clean_scene(
    width: usize,
    height: usize,
    sky_fraction: f64,
    seed: u64,
) -> Result<RasterImage> {
    if !(0.0..1.0).contains(&sky_fraction) {
        return Err(Error::param(format!(
            "sky fraction must lie in [0, 1), got {sky_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = horizon_row(height, sky_fraction);
    let base: [f64; 3] = [
        rng.gen_range(0.25..0.45),
        rng.gen_range(0.3..0.5),
        rng.gen_range(0.15..0.3),
    ];
    let blobs: Vec<Blob> = (0..rng.gen_range(6..12))
        .map(|_| Blob {
            cx: rng.gen_range(0.0..width as f64),
            cy: rng.gen_range(horizon as f64..height as f64),
            rx: rng.gen_range(0.05..0.25) * width as f64,
            ry: rng.gen_range(0.05..0.2) * height as f64,
            colour: [
                rng.gen_range(0.05..0.9),
                rng.gen_range(0.05..0.9),
                rng.gen_range(0.05..0.9),
            ],
        })
        .collect();
    let freq_x = rng.gen_range(0.2..0.6);
    let freq_y = rng.gen_range(0.15..0.5);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let texture: Vec<f64> = (0..width * height)
        .map(|_| rng.gen_range(-0.2..0.2))
        .collect();
    let sky_top = [
        rng.gen_range(0.45..0.6),
        rng.gen_range(0.6..0.72),
        rng.gen_range(0.8..0.95),
    ];

    RasterImage::from_fn(width, height, 3, |x, y, c| {
        if y < horizon {
            let v = y as f64 / height.max(1) as f64;
            return sky_top[c] + 0.08 * v;
        }
        let mut colour = base[c];
        for b in &blobs {
            let dx = (x as f64 - b.cx) / b.rx;
            let dy = (y as f64 - b.cy) / b.ry;
            if dx * dx + dy * dy <= 1.0 {
                colour = b.colour[c];
            }
        }
        let stripes = 0.08 * ((x as f64 * freq_x).sin() * (y as f64 * freq_y + phase).cos());
        colour + stripes + texture[y * width + x]
    })
}

/// Applies `I = J t + A (1 - t)` channel-wise.
pub fn apply_haze(clean: &RasterImage, t: &[f64], airlight: f64) -> Result<RasterImage> {
    let n = clean.width() * clean.height();
    if t.len() != n {
        return Err(Error::param("transmission map size mismatch"));
    }
    RasterImage::from_fn(
        clean.width(),
        clean.height(),
        clean.channels(),
        |x, y, c| {
            let i = y * clean.width() + x;
            clean.get(x, y, c) * t[i] + airlight * (1.0 - t[i])
        },
    )
}

/// Transmission of a pair generated from `seed`, uniform in `[T_MIN, T_MAX]`.
pub fn pair_transmission(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7472_616e_736d_6974);
    rng.gen_range(T_MIN..=T_MAX)
}

/// A (hazy, clean) pair with one transmission value for the whole image.
pub fn haze_pair(
    width: usize,
    height: usize,
    sky_fraction: f64,
    seed: u64,
) -> Result<(RasterImage, RasterImage)> {
    let clean = clean_scene(width, height, sky_fraction, seed)?;
    let t = vec![pair_transmission(seed); width * height];
    Ok((apply_haze(&clean, &t, AIRLIGHT)?, clean))
}

/// Writes `count` hazy/clean PNG pairs plus a `manifest.csv` into `dir`.
/// Every other image has a sky band covering 25-45 % of the rows.
pub fn write_dataset(
    dir: &Path,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    w.write_record(["input", "reference", "group"])?;
    for i in 0..count {
        let sky = if i % 2 == 0 {
            rng.gen_range(0.25..0.45)
        } else {
            0.0
        };
        let (hazy, clean) = haze_pair(size, size, sky, rng.gen())?;
        let hazy_name = format!("hazy_{i:03}.png");
        let clean_name = format!("clean_{i:03}.png");
        save_image(&hazy, dir.join(&hazy_name))?;
        save_image(&clean, dir.join(&clean_name))?;
        let group = if sky > 0.0 { "sky" } else { "ground" };
        w.write_record([hazy_name.as_str(), clean_name.as_str(), group])?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
