//! Illumination/reflectance enhancement.
//!
//! The luminance channel (HSV value) is split in the log domain into a
//! smooth illumination field and a reflectance residual. Enhancement is an
//! explicit PDE evolution that pulls the image toward its CLAHE result while
//! an edge-stopping diffusion term regularizes it. Three modes decide what
//! the PDE sees:
//!
//! * `Pa2`: the full value channel.
//! * `Pa2Sds`: the reflectance only when the sky detector fires, the full
//!   channel otherwise.
//! * `Pa2Lir`: the value channel rebuilt from a flattened illumination field.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{
    convolve_separable, gaussian_kernel, hsv_to_rgb, rgb_to_hsv, GrayImage, Plane, RasterImage,
};
use crate::sky::{detect_sky, SkyConfig, SkyDecision, SkyReport};
use crate::threshold::bin_of;

/// Floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1.0 / 255.0;

/// Additive log-domain split: `log_l + log_r = ln(max(v, epsilon))`.
#[derive(Clone, Debug, PartialEq)]
pub struct IrDecomposition {
    pub width: usize,
    pub height: usize,
    pub log_l: Vec<f64>,
    pub log_r: Vec<f64>,
    pub epsilon: f64,
}

impl IrDecomposition {
    /// `exp(log_l + log_r)` per pixel.
    pub fn recompose(&self) -> Vec<f64> {
        self.log_l
            .iter()
            .zip(&self.log_r)
            .map(|(l, r)| (l + r).exp())
            .collect()
    }

    pub fn illumination(&self) -> Vec<f64> {
        self.log_l.iter().map(|l| l.exp()).collect()
    }

    pub fn reflectance(&self) -> Vec<f64> {
        self.log_r.iter().map(|r| r.exp()).collect()
    }
}

/// Gaussian-blurred log image as illumination, residual as reflectance.
/// The blur sigma is `sigma_frac * min(width, height)`.
pub fn ir_decompose(v: &GrayImage, sigma_frac: f64) -> Result<IrDecomposition> {
    if !(sigma_frac > 0.0 && sigma_frac <= 1.0) {
        return Err(Error::param(format!(
            "sigma_frac must be in (0, 1], got {sigma_frac}"
        )));
    }
    let (width, height) = v.dims();
    let log_v: Vec<f64> = v.data().iter().map(|&s| s.max(LOG_FLOOR).ln()).collect();
    let sigma = sigma_frac * width.min(height) as f64;
    let log_l = convolve_separable(&log_v, width, height, &gaussian_kernel(sigma));
    let log_r = log_v.iter().zip(&log_l).map(|(v, l)| v - l).collect();
    Ok(IrDecomposition {
        width,
        height,
        log_l,
        log_r,
        epsilon: LOG_FLOOR,
    })
}

/// Raises every log-illumination value to the global maximum. Reflectance is
/// left untouched.
pub fn lir_refine(d: &IrDecomposition) -> IrDecomposition {
    let max = d.log_l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    IrDecomposition {
        log_l: vec![max; d.log_l.len()],
        ..d.clone()
    }
}

/// Per-tile intensity mapping. `Identity` is used for tiles whose histogram
/// has a single occupied bin.
#[derive(Clone, Debug)]
enum TileMap {
    Identity,
    Lut(Vec<f64>),
}

impl TileMap {
    #[inline]
    fn apply(&self, s: f64, bin: usize) -> f64 {
        match self {
            TileMap::Identity => s,
            TileMap::Lut(lut) => lut[bin],
        }
    }
}

fn tile_bounds(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    (0..tiles)
        .map(|i| (i * len / tiles, (i + 1) * len / tiles))
        .collect()
}

fn tile_map(g: &GrayImage, xs: (usize, usize), ys: (usize, usize), clip: f64) -> TileMap {
    let mut hist = [0.0f64; 256];
    for y in ys.0..ys.1 {
        for x in xs.0..xs.1 {
            hist[bin_of(g.at(x, y))] += 1.0;
        }
    }
    if hist.iter().filter(|&&c| c > 0.0).count() <= 1 {
        return TileMap::Identity;
    }
    let total: f64 = hist.iter().sum();
    let limit = clip * total;
    let mut excess = 0.0;
    for c in hist.iter_mut() {
        if *c > limit {
            excess += *c - limit;
            *c = limit;
        }
    }
    let share = excess / 256.0;
    let mut acc = 0.0;
    let lut = hist
        .iter()
        .map(|&c| {
            acc += c + share;
            (acc / total).min(1.0)
        })
        .collect();
    TileMap::Lut(lut)
}

/// Locates a pixel centre between tile centres: (lower index, upper index,
/// interpolation weight of the upper one).
fn tile_coord(p: f64, centres: &[f64]) -> (usize, usize, f64) {
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0, 0.0);
    }
    if p >= centres[last] {
        return (last, last, 0.0);
    }
    let i = centres.partition_point(|&c| c <= p) - 1;
    let a = (p - centres[i]) / (centres[i + 1] - centres[i]);
    (i, i + 1, a)
}

/// Contrast-limited adaptive histogram equalization.
///
/// `tiles` is (columns, rows). Each tile histogram (256 bins) is clipped at
/// `clip * tile pixel count`, the excess is spread uniformly, and the
/// resulting CDF maps intensities. Mappings are bilinearly interpolated
/// between tile centres.
pub fn clahe(g: &GrayImage, tiles: (usize, usize), clip: f64) -> Result<GrayImage> {
    let (tx, ty) = tiles;
    let (width, height) = g.dims();
    if tx == 0 || ty == 0 {
        return Err(Error::param("clahe needs at least one tile per axis"));
    }
    if !(clip > 0.0 && clip <= 1.0) {
        return Err(Error::param(format!(
            "clahe clip must be in (0, 1], got {clip}"
        )));
    }
    if width < tx || height < ty {
        return Err(Error::param(format!(
            "image {width}x{height} is smaller than the {tx}x{ty} tile grid"
        )));
    }
    let xb = tile_bounds(width, tx);
    let yb = tile_bounds(height, ty);
    let maps: Vec<TileMap> = yb
        .iter()
        .flat_map(|&ys| xb.iter().map(move |&xs| (xs, ys)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(xs, ys)| tile_map(g, xs, ys, clip))
        .collect();
    let cx: Vec<f64> = xb.iter().map(|&(a, b)| (a + b) as f64 / 2.0).collect();
    let cy: Vec<f64> = yb.iter().map(|&(a, b)| (a + b) as f64 / 2.0).collect();

    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let (y0, y1, b) = tile_coord(y as f64 + 0.5, &cy);
        for (x, o) in row.iter_mut().enumerate() {
            let (x0, x1, a) = tile_coord(x as f64 + 0.5, &cx);
            let s = g.at(x, y);
            let bin = bin_of(s);
            let m = |tyi: usize, txi: usize| maps[tyi * tx + txi].apply(s, bin);
            let (m00, m01, m10, m11) = (m(y0, x0), m(y0, x1), m(y1, x0), m(y1, x1));
            let top = m00 + a * (m01 - m00);
            let bottom = m10 + a * (m11 - m10);
            *o = top + b * (bottom - top);
        }
    });
    Ok(GrayImage::from_raw_clamped(width, height, out))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    #[default]
    Pa2,
    Pa2Sds,
    Pa2Lir,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Pa2, Mode::Pa2Sds, Mode::Pa2Lir];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Pa2 => "pa2",
            Mode::Pa2Sds => "pa2-sds",
            Mode::Pa2Lir => "pa2-lir",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "pa2" => Ok(Mode::Pa2),
            "pa2-sds" => Ok(Mode::Pa2Sds),
            "pa2-lir" => Ok(Mode::Pa2Lir),
            other => Err(Error::param(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhanceConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub dt: f64,
    /// Weight of the pull toward the CLAHE image.
    pub lambda_c: f64,
    /// Weight of the edge-stopping diffusion.
    pub lambda_d: f64,
    /// Edge-stopping contrast.
    pub k: f64,
    pub clahe_tiles: (usize, usize),
    pub clahe_clip: f64,
    pub tau_sky: f64,
    pub sdf_window: usize,
    /// Illumination blur sigma as a fraction of the shorter image side.
    pub sigma_frac: f64,
    pub min_separability: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Pa2,
            iterations: 118,
            dt: 0.2,
            lambda_c: 1.0,
            lambda_d: 0.05,
            k: 0.1,
            clahe_tiles: (8, 8),
            clahe_clip: 0.01,
            tau_sky: crate::sky::DEFAULT_TAU_SKY,
            sdf_window: crate::sky::DEFAULT_WINDOW,
            sigma_frac: 0.1,
            min_separability: crate::sky::DEFAULT_MIN_SEPARABILITY,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Param(msg));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.lambda_c.is_nan()
            || self.lambda_d.is_nan()
            || self.lambda_c < 0.0
            || self.lambda_d < 0.0
        {
            return bad("lambda_c and lambda_d must be >= 0".into());
        }
        if self.dt * self.lambda_c > 1.0 {
            return bad(format!(
                "dt * lambda_c = {} exceeds 1; the attachment term is unstable",
                self.dt * self.lambda_c
            ));
        }
        if self.lambda_d > 0.0 && (self.k.is_nan() || self.k <= 0.0) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.clahe_clip > 0.0 && self.clahe_clip <= 1.0) {
            return bad(format!(
                "clahe_clip must be in (0, 1], got {}",
                self.clahe_clip
            ));
        }
        if self.clahe_tiles.0 == 0 || self.clahe_tiles.1 == 0 {
            return bad("clahe_tiles must be at least 1x1".into());
        }
        if self.tau_sky.is_nan() || self.tau_sky < 0.0 {
            return bad(format!("tau_sky must be >= 0, got {}", self.tau_sky));
        }
        if self.sdf_window < 3 || self.sdf_window.is_multiple_of(2) {
            return bad(format!(
                "sdf_window must be odd and >= 3, got {}",
                self.sdf_window
            ));
        }
        if !(self.sigma_frac > 0.0 && self.sigma_frac <= 1.0) {
            return bad(format!(
                "sigma_frac must be in (0, 1], got {}",
                self.sigma_frac
            ));
        }
        Ok(())
    }

    pub fn sky_config(&self) -> SkyConfig {
        SkyConfig {
            window: self.sdf_window,
            tau: self.tau_sky,
            min_separability: self.min_separability,
            ..SkyConfig::default()
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::param(format!("bad value '{value}' for {key}")))
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "iterations" => self.iterations = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "lambda_c" => self.lambda_c = num(key, value)?,
            "lambda_d" => self.lambda_d = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "clahe_tiles" => {
                let (a, b) = value.split_once(['x', 'X']).ok_or_else(|| {
                    Error::param(format!("clahe_tiles expects CxR, got '{value}'"))
                })?;
                self.clahe_tiles = (num(key, a.trim())?, num(key, b.trim())?);
            }
            "clahe_clip" => self.clahe_clip = num(key, value)?,
            "tau_sky" => self.tau_sky = num(key, value)?,
            "sdf_window" => self.sdf_window = num(key, value)?,
            "sigma_frac" => self.sigma_frac = num(key, value)?,
            "min_separability" => self.min_separability = num(key, value)?,
            other => return Err(Error::param(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a flat `key=value` file body; `#` starts a comment. Keys not
    /// present keep their defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text, path)?;
        Ok(cfg)
    }

    /// Overrides the keys present in a `key=value` body, then validates.
    pub fn apply(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got '{line}'")))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| parse_err(e.to_string()))?;
        }
        self.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply(&text, path)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "mode={}\niterations={}\ndt={}\nlambda_c={}\nlambda_d={}\nk={}\nclahe_tiles={}x{}\n\
             clahe_clip={}\ntau_sky={}\nsdf_window={}\nsigma_frac={}\nmin_separability={}\n",
            self.mode,
            self.iterations,
            self.dt,
            self.lambda_c,
            self.lambda_d,
            self.k,
            self.clahe_tiles.0,
            self.clahe_tiles.1,
            self.clahe_clip,
            self.tau_sky,
            self.sdf_window,
            self.sigma_frac,
            self.min_separability,
        )
    }
}

/// Edge-stopping diffusivity.
#[inline]
fn diffusivity(s: f64, k: f64) -> f64 {
    1.0 / (1.0 + (s / k) * (s / k))
}

/// Explicit evolution
/// `u <- clamp(u + dt * (lambda_c * (clahe(u0) - u) + lambda_d * div(g(|grad u|) grad u)))`
/// run for exactly `cfg.iterations` steps. The update is Jacobi-style: every
/// pixel reads only the previous iterate.
pub fn pde_enhance(u0: &GrayImage, cfg: &EnhanceConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let (width, height) = u0.dims();
    let target = if cfg.lambda_c > 0.0 {
        clahe(u0, cfg.clahe_tiles, cfg.clahe_clip)?.into_data()
    } else {
        u0.data().to_vec()
    };
    let mut u = u0.data().to_vec();
    let mut next = vec![0.0; u.len()];
    let mut g = vec![0.0; u.len()];
    let idx = |x: usize, y: usize| y * width + x;
    for _ in 0..cfg.iterations {
        if cfg.lambda_d > 0.0 {
            g.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
                let ym = y.saturating_sub(1);
                let yp = (y + 1).min(height - 1);
                for (x, o) in row.iter_mut().enumerate() {
                    let xm = x.saturating_sub(1);
                    let xp = (x + 1).min(width - 1);
                    let gx = (u[idx(xp, y)] - u[idx(xm, y)]) / 2.0;
                    let gy = (u[idx(x, yp)] - u[idx(x, ym)]) / 2.0;
                    *o = diffusivity(gx.hypot(gy), cfg.k);
                }
            });
        }
        next.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let p = idx(x, y);
                let up = u[p];
                let mut div = 0.0;
                if cfg.lambda_d > 0.0 {
                    let flux = |q: usize| 0.5 * (g[p] + g[q]) * (u[q] - up);
                    if x > 0 {
                        div += flux(idx(x - 1, y));
                    }
                    if x + 1 < width {
                        div += flux(idx(x + 1, y));
                    }
                    if y > 0 {
                        div += flux(idx(x, y - 1));
                    }
                    if y + 1 < height {
                        div += flux(idx(x, y + 1));
                    }
                }
                let step = cfg.lambda_c * (target[p] - up) + cfg.lambda_d * div;
                *o = (up + cfg.dt * step).clamp(0.0, 1.0);
            }
        });
        std::mem::swap(&mut u, &mut next);
    }
    Ok(GrayImage::from_raw_clamped(width, height, u))
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Divides by the maximum when it exceeds 1.
fn fit_unit(mut v: Vec<f64>) -> Vec<f64> {
    let m = max_of(&v);
    if m > 1.0 {
        v.iter_mut().for_each(|s| *s /= m);
    }
    v
}

fn enhance_value(
    v: &GrayImage,
    img: &RasterImage,
    cfg: &EnhanceConfig,
) -> Result<(GrayImage, Option<SkyReport>)> {
    let (w, h) = v.dims();
    let ir = ir_decompose(v, cfg.sigma_frac)?;
    match cfg.mode {
        Mode::Pa2 => {
            let full = GrayImage::from_raw_clamped(w, h, ir.recompose());
            Ok((pde_enhance(&full, cfg)?, None))
        }
        Mode::Pa2Sds => {
            let report = detect_sky(img, &cfg.sky_config())?;
            if report.decision == SkyDecision::NoSky {
                let full = GrayImage::from_raw_clamped(w, h, ir.recompose());
                return Ok((pde_enhance(&full, cfg)?, Some(report)));
            }
            let refl = ir.reflectance();
            let scale = max_of(&refl).max(1.0);
            let normalized =
                GrayImage::from_raw_clamped(w, h, refl.iter().map(|r| r / scale).collect());
            let enhanced = pde_enhance(&normalized, cfg)?;
            let product = ir
                .illumination()
                .iter()
                .zip(enhanced.data())
                .map(|(l, r)| l * r * scale)
                .collect();
            Ok((
                GrayImage::from_raw_clamped(w, h, fit_unit(product)),
                Some(report),
            ))
        }
        Mode::Pa2Lir => {
            let refined = lir_refine(&ir);
            let v_lir = GrayImage::from_raw_clamped(w, h, fit_unit(refined.recompose()));
            Ok((pde_enhance(&v_lir, cfg)?, None))
        }
    }
}

/// Enhances one image according to `cfg.mode`. Colour images are processed
/// on the HSV value channel with hue and saturation kept; single-channel
/// images are processed directly. The sky report is returned in SDS mode.
pub fn enhance_dispatch(
    img: &RasterImage,
    cfg: &EnhanceConfig,
) -> Result<(RasterImage, Option<SkyReport>)> {
    cfg.validate()?;
    if img.channels() == 1 {
        let (v, report) = enhance_value(&img.channel(0), img, cfg)?;
        return Ok((RasterImage::from(v), report));
    }
    let hsv = rgb_to_hsv(img)?;
    let (v, report) = enhance_value(&hsv.channel(2), img, cfg)?;
    let merged = RasterImage::from_planes(&hsv.channel(0), &hsv.channel(1), &v)?;
    Ok((hsv_to_rgb(&merged)?, report))
}
