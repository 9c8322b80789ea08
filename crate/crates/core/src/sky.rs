//! Image-global sky / homogeneous-region detection.
//!
//! Pipeline: luma, gradient map, min-max normalization, global threshold,
//! black/white areas, homogeneity ratio (black over white), decision.
//! Fuzzy c-means groups the ratios of a whole dataset.

use std::fmt;
use std::str::FromStr;

use crate::edge::{gradient_map, FilterKind, GradientMap};
use crate::error::{Error, Result};
use crate::raster::{normalize_minmax, to_gray, GrayImage, RasterImage};
use crate::threshold::{binarize, BinaryMap, ThresholdMethod};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkyDecision {
    Sky,
    NoSky,
}

impl SkyDecision {
    pub fn name(self) -> &'static str {
        match self {
            SkyDecision::Sky => "sky",
            SkyDecision::NoSky => "nosky",
        }
    }
}

impl fmt::Display for SkyDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SkyDecision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sky" => Ok(SkyDecision::Sky),
            "nosky" | "no-sky" => Ok(SkyDecision::NoSky),
            other => Err(Error::param(format!("unknown sky decision '{other}'"))),
        }
    }
}

/// Ratio of black (homogeneous) to white (detail) area. A map with no white
/// pixels returns `f64::INFINITY`.
pub fn homogeneity_ratio(b: &BinaryMap) -> f64 {
    if b.white_count() == 0 {
        f64::INFINITY
    } else {
        b.black_count() as f64 / b.white_count() as f64
    }
}

pub const DEFAULT_TAU_SKY: f64 = 0.01;
pub const DEFAULT_WINDOW: usize = 15;
/// Minimum two-class separability (between-class over total variance) of
/// the thresholded map for its black class to count as homogeneous.
pub const DEFAULT_MIN_SEPARABILITY: f64 = 0.85;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkyConfig {
    pub filter: FilterKind,
    pub window: usize,
    pub method: ThresholdMethod,
    pub tau: f64,
    pub min_separability: f64,
}

impl Default for SkyConfig {
    fn default() -> Self {
        Self {
            filter: FilterKind::Sdf,
            window: DEFAULT_WINDOW,
            method: ThresholdMethod::Otsu,
            tau: DEFAULT_TAU_SKY,
            min_separability: DEFAULT_MIN_SEPARABILITY,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SkyReport {
    pub ratio: f64,
    pub decision: SkyDecision,
    pub gradient: GradientMap,
    pub binary: BinaryMap,
    pub filter_kind: FilterKind,
    pub window: usize,
    pub method: ThresholdMethod,
    /// `None` when the normalized map was constant.
    pub threshold: Option<f64>,
    /// Between-class over total variance of the threshold split; 1 for a
    /// constant map.
    pub separability: f64,
}

/// Between-class variance over total variance of a two-class split.
pub fn separability(samples: &[f64], bits: &[bool]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let total = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    if total <= 0.0 {
        return 1.0;
    }
    let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for (&s, &b) in samples.iter().zip(bits) {
        if b {
            n1 += 1.0;
            s1 += s;
        } else {
            n0 += 1.0;
            s0 += s;
        }
    }
    if n0 == 0.0 || n1 == 0.0 {
        return 0.0;
    }
    let (m0, m1) = (s0 / n0, s1 / n1);
    let between = (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
    (between / total).min(1.0)
}

/// Runs the detector on one image.
///
/// A constant gradient map (fully homogeneous scene) gives an all-black map,
/// ratio `+inf` and `Sky`. A split whose separability falls below
/// `cfg.min_separability` is treated as unimodal: the map is all white and
/// the ratio is 0.
pub fn detect_sky(img: &RasterImage, cfg: &SkyConfig) -> Result<SkyReport> {
    if cfg.tau.is_nan() || cfg.tau < 0.0 {
        return Err(Error::param(format!(
            "tau_sky must be >= 0, got {}",
            cfg.tau
        )));
    }
    let gray = to_gray(img);
    detect_sky_gray(&gray, cfg)
}

pub fn detect_sky_gray(gray: &GrayImage, cfg: &SkyConfig) -> Result<SkyReport> {
    let gradient = gradient_map(gray, cfg.filter, cfg.window)?;
    let norm = normalize_minmax(&gradient);
    let (w, h) = norm.dims();
    let (binary, threshold, sep) = match cfg.method.apply(&norm) {
        Err(_) => (BinaryMap::all_black(w, h), None, 1.0),
        Ok(t) => {
            let b = binarize(&norm, t)?;
            let sep = separability(norm.data(), b.bits());
            if sep < cfg.min_separability {
                (BinaryMap::all_white(w, h), Some(t), sep)
            } else {
                (b, Some(t), sep)
            }
        }
    };
    let ratio = homogeneity_ratio(&binary);
    let decision = if ratio > cfg.tau {
        SkyDecision::Sky
    } else {
        SkyDecision::NoSky
    };
    Ok(SkyReport {
        ratio,
        decision,
        gradient,
        binary,
        filter_kind: cfg.filter,
        window: cfg.window,
        method: cfg.method,
        threshold,
        separability: sep,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcmResult {
    pub centers: Vec<f64>,
    /// Row-major `N x c`.
    pub memberships: Vec<f64>,
    pub labels: Vec<usize>,
    pub objective: f64,
    /// Objective after initialization and after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl FcmResult {
    pub fn clusters(&self) -> usize {
        self.centers.len()
    }

    pub fn membership_row(&self, i: usize) -> &[f64] {
        let c = self.clusters();
        &self.memberships[i * c..(i + 1) * c]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FcmParams {
    pub clusters: usize,
    pub fuzzifier: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        Self {
            clusters: 2,
            fuzzifier: 2.0,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

fn fcm_memberships(points: &[f64], centers: &[f64], m: f64, out: &mut [f64]) {
    let c = centers.len();
    let exp = 2.0 / (m - 1.0);
    for (i, &x) in points.iter().enumerate() {
        let row = &mut out[i * c..(i + 1) * c];
        let zeros = centers.iter().filter(|&&v| x == v).count();
        if zeros > 0 {
            for (u, &v) in row.iter_mut().zip(centers) {
                *u = if x == v { 1.0 / zeros as f64 } else { 0.0 };
            }
            continue;
        }
        for j in 0..c {
            let dj = (x - centers[j]).abs();
            let denom: f64 = centers
                .iter()
                .map(|&v| (dj / (x - v).abs()).powf(exp))
                .sum();
            row[j] = 1.0 / denom;
        }
    }
}

fn fcm_objective(points: &[f64], centers: &[f64], u: &[f64], m: f64) -> f64 {
    let c = centers.len();
    points
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            centers
                .iter()
                .enumerate()
                .map(|(j, &v)| u[i * c + j].powf(m) * (x - v) * (x - v))
                .sum::<f64>()
        })
        .sum()
}

/// Fuzzy c-means on scalar data. Centers start evenly spaced between the
/// minimum and maximum of the points.
pub fn fcm_cluster(points: &[f64], params: &FcmParams) -> Result<FcmResult> {
    let c = params.clusters;
    let m = params.fuzzifier;
    if c < 2 {
        return Err(Error::param("fcm needs at least 2 clusters"));
    }
    if points.len() < c {
        return Err(Error::param(format!(
            "fcm needs at least {c} points, got {}",
            points.len()
        )));
    }
    if m.is_nan() || m <= 1.0 {
        return Err(Error::param(format!("fuzzifier must exceed 1, got {m}")));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::param("fcm points must be finite"));
    }
    let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut centers: Vec<f64> = (0..c)
        .map(|j| lo + (hi - lo) * j as f64 / (c - 1) as f64)
        .collect();
    let n = points.len();
    let mut u = vec![0.0; n * c];
    fcm_memberships(points, &centers, m, &mut u);
    let mut history = vec![fcm_objective(points, &centers, &u, m)];
    let mut next = vec![0.0; n * c];
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        for (j, center) in centers.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, &x) in points.iter().enumerate() {
                let w = u[i * c + j].powf(m);
                num += w * x;
                den += w;
            }
            if den > 0.0 {
                *center = num / den;
            }
        }
        fcm_memberships(points, &centers, m, &mut next);
        history.push(fcm_objective(points, &centers, &next, m));
        let delta = u
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut u, &mut next);
        if delta < params.tol {
            break;
        }
    }
    let labels = u
        .chunks_exact(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect();
    Ok(FcmResult {
        objective: *history.last().expect("initial objective"),
        centers,
        memberships: u,
        labels,
        history,
        iterations,
    })
}

/// One row of a classified ratio listing.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioClass {
    pub name: String,
    pub ratio: f64,
    /// 0 for the lower-center cluster, 1 for the higher one.
    pub cluster: usize,
    /// Membership in the higher-center cluster.
    pub membership_high: f64,
    pub label: SkyDecision,
}

/// Groups dataset ratios with two-cluster FCM, sorted by ratio.
///
/// Infinite ratios are clustered at twice the largest finite ratio (1 when
/// there is none). Members of the high cluster are `Sky`; a ratio of exactly
/// zero is always `NoSky`; any other positive ratio also counts as `Sky`
/// since some homogeneous area was found.
pub fn classify_dataset(ratios: &[(String, f64)]) -> Result<Vec<RatioClass>> {
    if ratios.len() < 2 {
        return Err(Error::param("classification needs at least two ratios"));
    }
    if let Some((name, r)) = ratios.iter().find(|(_, r)| r.is_nan() || *r < 0.0) {
        return Err(Error::param(format!("invalid ratio {r} for '{name}'")));
    }
    let mut sorted: Vec<(String, f64)> = ratios.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let max_finite = sorted
        .iter()
        .map(|(_, r)| *r)
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max);
    let inf_stand_in = if max_finite > 0.0 {
        2.0 * max_finite
    } else {
        1.0
    };
    let points: Vec<f64> = sorted
        .iter()
        .map(|(_, r)| if r.is_finite() { *r } else { inf_stand_in })
        .collect();
    let fcm = fcm_cluster(&points, &FcmParams::default())?;
    let high = if fcm.centers[1] >= fcm.centers[0] {
        1
    } else {
        0
    };
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, (name, ratio))| {
            let cluster = usize::from(fcm.labels[i] == high);
            let label = if ratio == 0.0 {
                SkyDecision::NoSky
            } else {
                SkyDecision::Sky
            };
            RatioClass {
                name,
                ratio,
                cluster,
                membership_high: fcm.membership_row(i)[high],
                label,
            }
        })
        .collect())
}
