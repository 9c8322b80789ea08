//! Dehazing quality metrics.
//!
//! No-reference: visible-edge ratio (Qe), saturated-area fraction (BWAR),
//! relative average gradient (RAG), hue deviation (HDI), colourfulness and
//! its enhancement factor (CEF). Full-reference: MSSIM, PSNR, MAE, MSE.
//!
//! Ratio metrics return `f64::INFINITY` when their denominator vanishes.

use crate::edge::sobel_at;
use crate::error::{Error, Result};
use crate::raster::{rgb_to_hsv_pixel, GrayImage, Plane, RasterImage};

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::param(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

fn ratio_or_inf(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Mean central-difference gradient magnitude over interior pixels.
pub fn avg_gradient(g: &GrayImage) -> f64 {
    let (w, h) = g.dims();
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let dx = (g.at(x + 1, y) - g.at(x - 1, y)) / 2.0;
            let dy = (g.at(x, y + 1) - g.at(x, y - 1)) / 2.0;
            acc += dx.hypot(dy);
        }
    }
    acc / ((w - 2) * (h - 2)) as f64
}

/// `AG(enh) / AG(orig)`.
pub fn rag(orig: &GrayImage, enh: &GrayImage) -> Result<f64> {
    same_dims(orig.dims(), enh.dims())?;
    if orig == enh {
        return Ok(1.0);
    }
    Ok(ratio_or_inf(avg_gradient(enh), avg_gradient(orig)))
}

/// Saturation below which a pixel's hue is ignored.
pub const ACHROMATIC_S: f64 = 1.0 / 255.0;

/// Mean circular hue distance in degrees over pixels chromatic in both images.
pub fn hdi(orig: &RasterImage, enh: &RasterImage) -> Result<f64> {
    same_dims(orig.dims(), enh.dims())?;
    if orig.channels() != 3 || enh.channels() != 3 {
        return Err(Error::param("hdi needs two RGB images"));
    }
    let n = orig.width() * orig.height();
    let (po, pe) = (orig.data(), enh.data());
    let (mut acc, mut count) = (0.0, 0usize);
    for i in 0..n {
        let (h0, s0, _) = rgb_to_hsv_pixel(po[i], po[n + i], po[2 * n + i]);
        let (h1, s1, _) = rgb_to_hsv_pixel(pe[i], pe[n + i], pe[2 * n + i]);
        if s0 < ACHROMATIC_S || s1 < ACHROMATIC_S {
            continue;
        }
        acc += hue_distance_degrees(h0, h1);
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { acc / count as f64 })
}

/// Circular distance between two hues given in turns, in degrees.
pub fn hue_distance_degrees(a: f64, b: f64) -> f64 {
    let d = ((a - b) * 360.0).abs() % 360.0;
    d.min(360.0 - d)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Opponent-channel colourfulness on the 0..255 scale:
/// `sqrt(sd_rg^2 + sd_yb^2) + 0.3 sqrt(mean_rg^2 + mean_yb^2)`.
/// Single-channel images have zero colourfulness.
pub fn colourfulness(img: &RasterImage) -> f64 {
    if img.channels() != 3 {
        return 0.0;
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let rg: Vec<f64> = r.iter().zip(g).map(|(r, g)| 255.0 * (r - g)).collect();
    let yb: Vec<f64> = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| 255.0 * (0.5 * (r + g) - b))
        .collect();
    let (m_rg, s_rg) = mean_std(&rg);
    let (m_yb, s_yb) = mean_std(&yb);
    s_rg.hypot(s_yb) + 0.3 * m_rg.hypot(m_yb)
}

/// `C(enh) / C(orig)`.
pub fn cef(orig: &RasterImage, enh: &RasterImage) -> Result<f64> {
    same_dims(orig.dims(), enh.dims())?;
    if orig == enh && colourfulness(orig) > 0.0 {
        return Ok(1.0);
    }
    Ok(ratio_or_inf(colourfulness(enh), colourfulness(orig)))
}

/// Sobel magnitude above which an edge counts as visible.
pub const VISIBLE_EDGE_THRESHOLD: f64 = 0.1;

pub fn visible_edge_count(g: &GrayImage) -> usize {
    let (w, h) = g.dims();
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = sobel_at(g, x, y);
            if gx.hypot(gy) > VISIBLE_EDGE_THRESHOLD {
                count += 1;
            }
        }
    }
    count
}

/// Ratio of visible-edge counts, enhanced over original; 1 for identical
/// images.
pub fn visible_edge_ratio_qe(orig: &GrayImage, enh: &GrayImage) -> Result<f64> {
    same_dims(orig.dims(), enh.dims())?;
    if orig == enh {
        return Ok(1.0);
    }
    let n0 = visible_edge_count(orig);
    let nr = visible_edge_count(enh);
    Ok(ratio_or_inf(nr as f64, n0 as f64))
}

/// Fraction of pixels saturated to black (`<= 1/255`) or white (`>= 254/255`).
pub fn bwar(enh: &GrayImage) -> f64 {
    let data = enh.data();
    let sat = data
        .iter()
        .filter(|&&s| s <= 1.0 / 255.0 || s >= 254.0 / 255.0)
        .count();
    sat as f64 / data.len() as f64
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 2-D Gaussian SSIM window, row-major.
pub fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in -r..=r {
        for x in -r..=r {
            w.push((-((x * x + y * y) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// SSIM map over every window fully inside the image (dynamic range 1).
pub fn ssim_map(a: &GrayImage, b: &GrayImage) -> Result<Vec<f64>> {
    same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::param(format!(
            "mssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"
        )));
    }
    let win = ssim_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..SSIM_WINDOW {
                for i in 0..SSIM_WINDOW {
                    let wt = win[j * SSIM_WINDOW + i];
                    let va = a.at(x + i, y + j);
                    let vb = b.at(x + i, y + j);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            out.push(num / den);
        }
    }
    Ok(out)
}

/// Mean structural similarity.
pub fn mssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullReference {
    /// Decibels; `+inf` for identical inputs.
    pub psnr: f64,
    pub mae: f64,
    pub mse: f64,
}

/// PSNR, MAE and MSE on the 0..255 scale over all samples of all channels.
pub fn full_reference(a: &RasterImage, b: &RasterImage) -> Result<FullReference> {
    same_dims(a.dims(), b.dims())?;
    if a.channels() != b.channels() {
        return Err(Error::param("channel counts differ"));
    }
    let n = a.data().len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = 255.0 * (x - y);
        abs += d.abs();
        sq += d * d;
    }
    let mse = sq / n;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    };
    Ok(FullReference {
        psnr,
        mae: abs / n,
        mse,
    })
}

/// One image's metric vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub image_name: String,
    pub algorithm: String,
    pub qe: f64,
    pub bwar: f64,
    pub rag: f64,
    pub hdi: f64,
    pub cef: f64,
    pub mssim: Option<f64>,
    pub psnr: Option<f64>,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub ratio: Option<f64>,
    pub sky: Option<crate::sky::SkyDecision>,
    pub runtime_s: f64,
    pub iterations: Option<usize>,
}

/// Computes every applicable metric for an (input, output, reference?) triple.
/// Hue and colour metrics fall back to 0 / 1 for single-channel images.
pub fn evaluate(
    input: &RasterImage,
    output: &RasterImage,
    reference: Option<&RasterImage>,
) -> Result<EvaluatedMetrics> {
    use crate::raster::to_gray;
    let gi = to_gray(input);
    let go = to_gray(output);
    let (hdi_v, cef_v) = if input.channels() == 3 && output.channels() == 3 {
        (hdi(input, output)?, cef(input, output)?)
    } else {
        (0.0, 1.0)
    };
    let full = match reference {
        Some(r) => {
            let gr = to_gray(r);
            let fr = if r.channels() == output.channels() {
                full_reference(output, r)?
            } else {
                full_reference(
                    &RasterImage::from(go.clone()),
                    &RasterImage::from(gr.clone()),
                )?
            };
            Some((mssim(&go, &gr)?, fr))
        }
        None => None,
    };
    Ok(EvaluatedMetrics {
        qe: visible_edge_ratio_qe(&gi, &go)?,
        bwar: bwar(&go),
        rag: rag(&gi, &go)?,
        hdi: hdi_v,
        cef: cef_v,
        full,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaluatedMetrics {
    pub qe: f64,
    pub bwar: f64,
    pub rag: f64,
    pub hdi: f64,
    pub cef: f64,
    /// (MSSIM, PSNR/MAE/MSE) when a reference was supplied.
    pub full: Option<(f64, FullReference)>,
}
