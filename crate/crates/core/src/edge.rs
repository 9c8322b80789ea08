//! Gradient / homogeneity map generators.
//!
//! Three families: windowed dispersion statistics, fixed-kernel linear edge
//! operators and a small rule-based fuzzy detector. All of them use
//! replicate padding at the border.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{GrayImage, Plane};

/// Non-negative edge response with the dimensions of its source image.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GradientMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::param("gradient map size mismatch"));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(
                "gradient responses must be finite and non-negative",
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

impl Plane for GradientMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn samples(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    /// Population standard deviation.
    Sdf,
    /// Median absolute deviation from the median.
    Madf,
    /// Mean absolute deviation from the mean.
    Aadf,
    /// Range, max - min.
    Rf,
    /// Interquartile range with linearly interpolated quartiles.
    Iqrf,
    /// Gini mean difference.
    Mdf,
    /// Gini mean difference over the mean.
    Rmdf,
    Sobel,
    Prewitt,
    Roberts,
    /// Laplacian of Gaussian, sigma 2, 13x13 kernel.
    Log,
    /// Sign changes of the LoG response.
    ZeroCross,
    Fuzzy,
}

impl FilterKind {
    pub const ALL: [FilterKind; 13] = [
        FilterKind::Sdf,
        FilterKind::Madf,
        FilterKind::Aadf,
        FilterKind::Rf,
        FilterKind::Iqrf,
        FilterKind::Mdf,
        FilterKind::Rmdf,
        FilterKind::Sobel,
        FilterKind::Prewitt,
        FilterKind::Roberts,
        FilterKind::Log,
        FilterKind::ZeroCross,
        FilterKind::Fuzzy,
    ];

    pub const STATISTICAL: [FilterKind; 7] = [
        FilterKind::Sdf,
        FilterKind::Madf,
        FilterKind::Aadf,
        FilterKind::Rf,
        FilterKind::Iqrf,
        FilterKind::Mdf,
        FilterKind::Rmdf,
    ];

    pub fn is_statistical(self) -> bool {
        Self::STATISTICAL.contains(&self)
    }

    pub fn is_linear(self) -> bool {
        matches!(
            self,
            FilterKind::Sobel
                | FilterKind::Prewitt
                | FilterKind::Roberts
                | FilterKind::Log
                | FilterKind::ZeroCross
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Sdf => "sdf",
            FilterKind::Madf => "madf",
            FilterKind::Aadf => "aadf",
            FilterKind::Rf => "rf",
            FilterKind::Iqrf => "iqrf",
            FilterKind::Mdf => "mdf",
            FilterKind::Rmdf => "rmdf",
            FilterKind::Sobel => "sobel",
            FilterKind::Prewitt => "prewitt",
            FilterKind::Roberts => "roberts",
            FilterKind::Log => "log",
            FilterKind::ZeroCross => "zerocross",
            FilterKind::Fuzzy => "fuzzy",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::param(format!("unknown filter kind '{s}'")))
    }
}

fn check_window(g: &GrayImage, w: usize) -> Result<()> {
    let (width, height) = g.dims();
    if w < 3 || w.is_multiple_of(2) {
        return Err(Error::param(format!(
            "window must be odd and >= 3, got {w}"
        )));
    }
    if w > width.min(height) {
        return Err(Error::param(format!(
            "window {w} exceeds the smaller image side {}",
            width.min(height)
        )));
    }
    Ok(())
}

/// Value of the `q` quantile of sorted data, linear interpolation between
/// order statistics.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Mean accumulated relative to the first sample, so a constant window
/// yields exactly that constant.
fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Gini mean difference of sorted data: mean of |xi - xj| over ordered
/// pairs i != j, from prefix weights in O(n).
fn gini_mean_difference_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let lo = sorted[0];
    let acc: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - lo) * (2.0 * i as f64 - (n - 1) as f64))
        .sum();
    (2.0 * acc / (n * (n - 1)) as f64).max(0.0)
}

/// Dispersion statistic of one window. `buf` is scratch and gets reordered.
pub(crate) fn window_statistic(kind: FilterKind, buf: &mut [f64], scratch: &mut Vec<f64>) -> f64 {
    match kind {
        FilterKind::Sdf => {
            let m = mean(buf);
            let var = buf.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / buf.len() as f64;
            var.sqrt()
        }
        FilterKind::Aadf => {
            let m = mean(buf);
            buf.iter().map(|x| (x - m).abs()).sum::<f64>() / buf.len() as f64
        }
        FilterKind::Rf => {
            let (lo, hi) = buf
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        }
        FilterKind::Madf => {
            let mid = buf.len() / 2;
            let med = *buf.select_nth_unstable_by(mid, f64::total_cmp).1;
            scratch.clear();
            scratch.extend(buf.iter().map(|x| (x - med).abs()));
            *scratch.select_nth_unstable_by(mid, f64::total_cmp).1
        }
        FilterKind::Iqrf => {
            buf.sort_unstable_by(f64::total_cmp);
            quantile_sorted(buf, 0.75) - quantile_sorted(buf, 0.25)
        }
        FilterKind::Mdf => {
            buf.sort_unstable_by(f64::total_cmp);
            gini_mean_difference_sorted(buf)
        }
        FilterKind::Rmdf => {
            let m = mean(buf);
            buf.sort_unstable_by(f64::total_cmp);
            let md = gini_mean_difference_sorted(buf);
            if m > 0.0 {
                md / m
            } else {
                0.0
            }
        }
        _ => unreachable!("not a statistical filter"),
    }
}

fn stat_row(g: &GrayImage, kind: FilterKind, w: usize, y: usize, out: &mut [f64]) {
    let r = (w / 2) as isize;
    let mut buf = Vec::with_capacity(w * w);
    let mut scratch = Vec::with_capacity(w * w);
    for (x, o) in out.iter_mut().enumerate() {
        buf.clear();
        for dy in -r..=r {
            for dx in -r..=r {
                buf.push(g.at_padded(x as isize + dx, y as isize + dy));
            }
        }
        *o = window_statistic(kind, &mut buf, &mut scratch);
    }
}

fn stat_filter_impl(
    g: &GrayImage,
    kind: FilterKind,
    w: usize,
    parallel: bool,
) -> Result<GradientMap> {
    if !kind.is_statistical() {
        return Err(Error::param(format!("{kind} is not a statistical filter")));
    }
    check_window(g, w)?;
    let (width, height) = g.dims();
    let mut data = vec![0.0; width * height];
    if parallel {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(y, row)| stat_row(g, kind, w, y, row));
    } else {
        data.chunks_mut(width)
            .enumerate()
            .for_each(|(y, row)| stat_row(g, kind, w, y, row));
    }
    Ok(GradientMap {
        width,
        height,
        data,
    })
}

/// Windowed dispersion statistic over a `w x w` replicate-padded neighbourhood.
pub fn stat_filter(g: &GrayImage, kind: FilterKind, w: usize) -> Result<GradientMap> {
    stat_filter_impl(g, kind, w, true)
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const PREWITT_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]];

fn correlate3(g: &GrayImage, k: &[[f64; 3]; 3], x: usize, y: usize, transpose: bool) -> f64 {
    let mut acc = 0.0;
    for (j, row) in k.iter().enumerate() {
        for (i, &wt) in row.iter().enumerate() {
            let (dx, dy) = if transpose { (j, i) } else { (i, j) };
            acc += wt * g.at_padded(x as isize + dx as isize - 1, y as isize + dy as isize - 1);
        }
    }
    acc
}

/// Raw (unnormalized) Sobel derivatives at one pixel.
#[inline]
pub fn sobel_at(g: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    (
        correlate3(g, &SOBEL_X, x, y, false),
        correlate3(g, &SOBEL_X, x, y, true),
    )
}

/// Sobel gradient magnitude map.
pub fn sobel_magnitude(g: &GrayImage) -> GradientMap {
    map_pixels(g, |g, x, y| {
        let (gx, gy) = sobel_at(g, x, y);
        gx.hypot(gy)
    })
}

fn map_pixels(g: &GrayImage, f: impl Fn(&GrayImage, usize, usize) -> f64 + Sync) -> GradientMap {
    let (width, height) = g.dims();
    let mut data = vec![0.0; width * height];
    data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = f(g, x, y);
        }
    });
    GradientMap {
        width,
        height,
        data,
    }
}

const LOG_SIGMA: f64 = 2.0;
const LOG_SIZE: usize = 13;
const ZERO_CROSS_EPS: f64 = 1e-9;

/// Zero-sum Laplacian-of-Gaussian kernel, row-major `LOG_SIZE x LOG_SIZE`.
pub(crate) fn log_kernel() -> Vec<f64> {
    let r = (LOG_SIZE / 2) as isize;
    let s2 = LOG_SIGMA * LOG_SIGMA;
    let mut k = Vec::with_capacity(LOG_SIZE * LOG_SIZE);
    for y in -r..=r {
        for x in -r..=r {
            let rr = (x * x + y * y) as f64;
            k.push((rr - 2.0 * s2) / (s2 * s2) * (-rr / (2.0 * s2)).exp());
        }
    }
    let m = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= m);
    k
}

fn log_response(g: &GrayImage) -> Vec<f64> {
    let k = log_kernel();
    let r = (LOG_SIZE / 2) as isize;
    let (width, height) = g.dims();
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            // the kernel sums to zero, so differences from the centre give
            // the same response and vanish exactly on flat patches
            let centre = g.at(x, y);
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let wt = k[((dy + r) as usize) * LOG_SIZE + (dx + r) as usize];
                    acc += wt * (g.at_padded(x as isize + dx, y as isize + dy) - centre);
                }
            }
            *o = acc;
        }
    });
    out
}

/// Fixed-kernel edge operators.
pub fn linear_edge(g: &GrayImage, kind: FilterKind) -> Result<GradientMap> {
    let (width, height) = g.dims();
    let map = match kind {
        FilterKind::Sobel => sobel_magnitude(g),
        FilterKind::Prewitt => map_pixels(g, |g, x, y| {
            let gx = correlate3(g, &PREWITT_X, x, y, false);
            let gy = correlate3(g, &PREWITT_X, x, y, true);
            gx.hypot(gy)
        }),
        FilterKind::Roberts => map_pixels(g, |g, x, y| {
            let (x, y) = (x as isize, y as isize);
            let gx = g.at_padded(x, y) - g.at_padded(x + 1, y + 1);
            let gy = g.at_padded(x + 1, y) - g.at_padded(x, y + 1);
            gx.hypot(gy)
        }),
        FilterKind::Log => {
            let resp = log_response(g);
            GradientMap {
                width,
                height,
                data: resp.into_iter().map(f64::abs).collect(),
            }
        }
        FilterKind::ZeroCross => {
            let resp = log_response(g);
            let at = |x: usize, y: usize| resp[y * width + x];
            let crosses = |a: f64, b: f64| a * b < 0.0 && (a - b).abs() > ZERO_CROSS_EPS;
            let mut data = vec![0.0; width * height];
            for y in 0..height {
                for x in 0..width {
                    let v = at(x, y);
                    let right = x + 1 < width && crosses(v, at(x + 1, y));
                    let down = y + 1 < height && crosses(v, at(x, y + 1));
                    if right || down {
                        data[y * width + x] = 1.0;
                    }
                }
            }
            GradientMap {
                width,
                height,
                data,
            }
        }
        other => return Err(Error::param(format!("{other} is not a linear edge filter"))),
    };
    Ok(map)
}

/// Saturation point of the fuzzy "high gradient" membership.
pub const FUZZY_THETA: f64 = 0.25;

#[inline]
pub fn membership_high(t: f64) -> f64 {
    (t / FUZZY_THETA).min(1.0)
}

#[inline]
pub fn membership_low(t: f64) -> f64 {
    (1.0 - t / FUZZY_THETA).max(0.0)
}

/// Rule-based fuzzy edge degree: IF |Gx| is high OR |Gy| is high THEN edge.
pub fn fuzzy_edge(g: &GrayImage) -> GradientMap {
    map_pixels(g, |g, x, y| {
        let (gx, gy) = sobel_at(g, x, y);
        membership_high(gx.abs()).max(membership_high(gy.abs()))
    })
}

/// Dispatches to the right family; `window` is ignored by non-statistical kinds.
pub fn gradient_map(g: &GrayImage, kind: FilterKind, window: usize) -> Result<GradientMap> {
    gradient_map_impl(g, kind, window, true)
}

fn gradient_map_impl(
    g: &GrayImage,
    kind: FilterKind,
    window: usize,
    parallel: bool,
) -> Result<GradientMap> {
    if kind.is_statistical() {
        stat_filter_impl(g, kind, window, parallel)
    } else if kind == FilterKind::Fuzzy {
        Ok(fuzzy_edge(g))
    } else {
        linear_edge(g, kind)
    }
}

/// One timing cell of the filter benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub kind: FilterKind,
    pub window: usize,
    pub seconds: f64,
}

fn run_single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool");
    pool.install(f)
}

/// Median wall time of each (kind, window) cell over `repetitions` timed runs,
/// after one discarded warm-up. Timed sections run on a single thread.
/// Non-statistical kinds get one row with `window = 0`.
pub fn benchmark_filters(
    g: &GrayImage,
    kinds: &[FilterKind],
    windows: &[usize],
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    if kinds.is_empty() || windows.is_empty() {
        return Err(Error::param(
            "benchmark needs at least one filter and one window",
        ));
    }
    if repetitions < 3 {
        return Err(Error::param("benchmark needs at least 3 repetitions"));
    }
    for &w in windows {
        check_window(g, w)?;
    }
    let mut rows = Vec::new();
    for &kind in kinds {
        let cells: Vec<usize> = if kind.is_statistical() {
            windows.to_vec()
        } else {
            vec![0]
        };
        for window in cells {
            let seconds = run_single_threaded(|| -> Result<f64> {
                gradient_map_impl(g, kind, window, false)?;
                let mut times = Vec::with_capacity(repetitions);
                for _ in 0..repetitions {
                    let start = Instant::now();
                    let map = gradient_map_impl(g, kind, window, false)?;
                    std::hint::black_box(&map);
                    times.push(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
                }
                times.sort_by(f64::total_cmp);
                Ok(times[times.len() / 2])
            })?;
            rows.push(BenchRow {
                kind,
                window,
                seconds,
            });
        }
    }
    Ok(rows)
}
