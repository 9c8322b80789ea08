//! Global thresholding of normalized maps and black/white area counting.
//!
//! All methods work on a 256-bin histogram where bin `k` holds the samples
//! closest to `k / 255`, i.e. `s <= (k + 0.5) / 255` for the smallest such
//! `k`. A threshold "after bin k" is reported as `(k + 0.5) / 255`, so
//! [`binarize`] with that value reproduces the histogram partition exactly.
//!
//! When several cut positions produce the same partition (empty bins between
//! the classes) the reported threshold is the centre of that gap. Among
//! distinct partitions with equal score the smallest wins.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::Plane;

pub const BINS: usize = 256;

/// Raised when a map has a single occupied histogram bin (or one class would
/// be empty for every cut), so no threshold is meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Degenerate;

impl fmt::Display for Degenerate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("degenerate histogram: a single occupied bin")
    }
}

impl std::error::Error for Degenerate {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ThresholdMethod {
    #[default]
    Otsu,
    Entropy,
    Isodata,
}

impl ThresholdMethod {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdMethod::Otsu => "otsu",
            ThresholdMethod::Entropy => "entropy",
            ThresholdMethod::Isodata => "isodata",
        }
    }

    pub fn apply<P: Plane + ?Sized>(self, g: &P) -> std::result::Result<f64, Degenerate> {
        let hist = histogram(g.samples());
        match self {
            ThresholdMethod::Otsu => otsu_from_histogram(&hist),
            ThresholdMethod::Entropy => entropy_from_histogram(&hist),
            ThresholdMethod::Isodata => isodata_from_histogram(&hist),
        }
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThresholdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "otsu" => Ok(ThresholdMethod::Otsu),
            "entropy" => Ok(ThresholdMethod::Entropy),
            "isodata" => Ok(ThresholdMethod::Isodata),
            other => Err(Error::param(format!("unknown threshold method '{other}'"))),
        }
    }
}

/// Threshold value separating bin `k` from bin `k + 1`.
#[inline]
pub fn cut_value(k: f64) -> f64 {
    (k + 0.5) / 255.0
}

/// Histogram bin of a `[0, 1]` sample.
#[inline]
pub fn bin_of(s: f64) -> usize {
    let mut k = (s * 255.0).round().clamp(0.0, 255.0) as usize;
    // settle rounding at the bin edges against the exact cut values
    while k > 0 && s <= cut_value((k - 1) as f64) {
        k -= 1;
    }
    while k < BINS - 1 && s > cut_value(k as f64) {
        k += 1;
    }
    k
}

pub fn histogram(samples: &[f64]) -> [u64; BINS] {
    let mut hist = [0u64; BINS];
    for &s in samples {
        hist[bin_of(s)] += 1;
    }
    hist
}

/// Cut positions (last bin of the lower class) for which both classes are
/// non-empty.
fn valid_cuts(hist: &[u64; BINS]) -> Option<(usize, usize)> {
    let first = hist.iter().position(|&c| c > 0)?;
    let last = hist.iter().rposition(|&c| c > 0)?;
    if first == last {
        None
    } else {
        Some((first, last - 1))
    }
}

/// Widens a winning cut `k` across the empty bins that follow it and returns
/// the centre of the resulting gap as a threshold value.
fn gap_centre(hist: &[u64; BINS], k: usize) -> f64 {
    let mut hi = k;
    while hi + 1 < BINS - 1 && hist[hi + 1] == 0 {
        hi += 1;
    }
    cut_value((k + hi) as f64 / 2.0)
}

/// Otsu score of every cut as an exact rational `num / den`, proportional to
/// the between-class variance: `(n S0 - N0 S)^2 / (N0 N1)`.
#[derive(Clone, Copy, Debug)]
struct OtsuScore {
    quotient: u128,
    remainder: u128,
    den: u128,
}

impl OtsuScore {
    fn new(num: u128, den: u128) -> Self {
        Self {
            quotient: num / den,
            remainder: num % den,
            den,
        }
    }

    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.quotient
            .cmp(&other.quotient)
            .then_with(|| (self.remainder * other.den).cmp(&(other.remainder * self.den)))
    }
}

/// Largest pixel count for which the exact Otsu comparison fits in `u128`.
pub const OTSU_MAX_PIXELS: u64 = 1 << 27;

pub fn otsu_from_histogram(hist: &[u64; BINS]) -> std::result::Result<f64, Degenerate> {
    let (lo, hi) = valid_cuts(hist).ok_or(Degenerate)?;
    let n: u64 = hist.iter().sum();
    assert!(n <= OTSU_MAX_PIXELS, "histogram too large for exact Otsu");
    let total: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    for (i, &c) in hist.iter().enumerate().take(lo) {
        n0 += c as u128;
        s0 += i as u128 * c as u128;
    }
    let mut best: Option<(usize, OtsuScore)> = None;
    for (k, &c) in hist.iter().enumerate().take(hi + 1).skip(lo) {
        n0 += c as u128;
        s0 += k as u128 * c as u128;
        let n1 = n as u128 - n0;
        let a = n as u128 * s0;
        let b = n0 * total;
        let d = a.abs_diff(b);
        let score = OtsuScore::new(d * d, n0 * n1);
        match &best {
            Some((_, b)) if score.cmp(b) != std::cmp::Ordering::Greater => {}
            _ => best = Some((k, score)),
        }
    }
    let (k, _) = best.expect("non-empty cut range");
    Ok(gap_centre(hist, k))
}

/// Otsu's threshold: maximizes the between-class variance.
pub fn otsu_threshold<P: Plane + ?Sized>(g: &P) -> std::result::Result<f64, Degenerate> {
    ThresholdMethod::Otsu.apply(g)
}

fn class_entropy(counts: &[u64], mass: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / mass;
            -p * p.ln()
        })
        .sum()
}

/// Kapur entropy sum of the two class distributions for cut `k`.
pub(crate) fn kapur_score(hist: &[u64; BINS], k: usize) -> f64 {
    let m0: u64 = hist[..=k].iter().sum();
    let m1: u64 = hist[k + 1..].iter().sum();
    class_entropy(&hist[..=k], m0 as f64) + class_entropy(&hist[k + 1..], m1 as f64)
}

pub fn entropy_from_histogram(hist: &[u64; BINS]) -> std::result::Result<f64, Degenerate> {
    let (lo, hi) = valid_cuts(hist).ok_or(Degenerate)?;
    let mut best = (lo, f64::NEG_INFINITY);
    for k in lo..=hi {
        let h = kapur_score(hist, k);
        if h > best.1 {
            best = (k, h);
        }
    }
    Ok(gap_centre(hist, best.0))
}

/// Maximum-entropy (Kapur) threshold.
pub fn entropy_threshold<P: Plane + ?Sized>(g: &P) -> std::result::Result<f64, Degenerate> {
    ThresholdMethod::Entropy.apply(g)
}

pub const ISODATA_TOL: f64 = 1.0 / 512.0;
pub const ISODATA_MAX_ITER: usize = 100;

/// Means of the bin values `k / 255` below-or-at and above `t`.
fn intermeans(hist: &[u64; BINS], t: f64) -> Option<(f64, f64)> {
    let (mut n0, mut s0, mut n1, mut s1) = (0u64, 0.0, 0u64, 0.0);
    for (k, &c) in hist.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let v = k as f64 / 255.0;
        if v <= t {
            n0 += c;
            s0 += c as f64 * v;
        } else {
            n1 += c;
            s1 += c as f64 * v;
        }
    }
    (n0 > 0 && n1 > 0).then(|| (s0 / n0 as f64, s1 / n1 as f64))
}

/// The sequence of intermeans iterates, starting from the global mean.
pub fn isodata_iterates(hist: &[u64; BINS]) -> std::result::Result<Vec<f64>, Degenerate> {
    valid_cuts(hist).ok_or(Degenerate)?;
    let n: u64 = hist.iter().sum();
    let mean = hist
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * k as f64 / 255.0)
        .sum::<f64>()
        / n as f64;
    let mut ts = vec![mean];
    let mut t = mean;
    for _ in 0..ISODATA_MAX_ITER {
        let Some((m0, m1)) = intermeans(hist, t) else {
            break;
        };
        let next = (m0 + m1) / 2.0;
        ts.push(next);
        let done = (next - t).abs() < ISODATA_TOL;
        t = next;
        if done {
            break;
        }
    }
    Ok(ts)
}

pub fn isodata_from_histogram(hist: &[u64; BINS]) -> std::result::Result<f64, Degenerate> {
    Ok(*isodata_iterates(hist)?
        .last()
        .expect("at least the initial mean"))
}

/// Ridler-Calvard intermeans threshold.
pub fn isodata_threshold<P: Plane + ?Sized>(g: &P) -> std::result::Result<f64, Degenerate> {
    ThresholdMethod::Isodata.apply(g)
}

/// Thresholded map. `true` (white) marks detail, `false` (black) marks
/// homogeneous pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    black: usize,
    white: usize,
}

impl BinaryMap {
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::param("binary map size mismatch"));
        }
        let white = bits.iter().filter(|&&b| b).count();
        Ok(Self {
            width,
            height,
            black: bits.len() - white,
            white,
            bits,
        })
    }

    pub fn all_white(width: usize, height: usize) -> Self {
        Self::from_bits(width, height, vec![true; width * height]).expect("sized")
    }

    pub fn all_black(width: usize, height: usize) -> Self {
        Self::from_bits(width, height, vec![false; width * height]).expect("sized")
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn black_count(&self) -> usize {
        self.black
    }

    pub fn white_count(&self) -> usize {
        self.white
    }

    /// White as 1.0, black as 0.0.
    pub fn to_gray(&self) -> crate::raster::GrayImage {
        let data = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        crate::raster::GrayImage::new(self.width, self.height, data).expect("binary samples")
    }
}

/// `sample > t` is white.
pub fn binarize<P: Plane + ?Sized>(g: &P, t: f64) -> Result<BinaryMap> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("threshold {t} outside [0, 1]")));
    }
    let bits = g.samples().iter().map(|&s| s > t).collect();
    BinaryMap::from_bits(g.width(), g.height(), bits)
}

/// (black, white) pixel counts.
pub fn area_counts(b: &BinaryMap) -> (usize, usize) {
    (b.black, b.white)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GrayImage;

    fn gray(values: &[f64]) -> GrayImage {
        GrayImage::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn bins_match_cut_values() {
        for k in 0..255 {
            let c = cut_value(k as f64);
            assert_eq!(bin_of(c), k);
            assert_eq!(bin_of(c + 1e-12), k + 1);
        }
        assert_eq!(bin_of(0.0), 0);
        assert_eq!(bin_of(1.0), 255);
        assert_eq!(bin_of(128.0 / 255.0), 128);
    }

    #[test]
    fn otsu_separates_two_groups() {
        let g = gray(&[1.0, 1.0, 1.0, 9.0, 9.0, 9.0].map(|v| v / 255.0));
        let t = otsu_threshold(&g).unwrap();
        assert!(t > 1.0 / 255.0 && t < 9.0 / 255.0);
        assert!((t - 5.0 / 255.0).abs() < 1e-12);
        let b = binarize(&g, t).unwrap();
        assert_eq!(area_counts(&b), (3, 3));
    }

    #[test]
    fn otsu_symmetric_spikes() {
        let g = gray(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let t = otsu_threshold(&g).unwrap();
        assert!((t - 0.5).abs() <= 1.0 / 255.0);
    }

    #[test]
    fn degenerate_inputs() {
        let g = GrayImage::constant(5, 5, 0.4).unwrap();
        assert_eq!(otsu_threshold(&g), Err(Degenerate));
        assert_eq!(entropy_threshold(&g), Err(Degenerate));
        assert_eq!(isodata_threshold(&g), Err(Degenerate));
    }

    #[test]
    fn entropy_between_uniform_blocks() {
        let mut v: Vec<f64> = (20..40).map(|k| k as f64 / 255.0).collect();
        v.extend((180..200).map(|k| k as f64 / 255.0));
        let t = entropy_threshold(&gray(&v)).unwrap();
        assert!(t > 39.0 / 255.0 && t < 180.0 / 255.0, "t = {t}");
    }

    #[test]
    fn isodata_symmetric_bimodal() {
        let mut v = vec![0.2; 50];
        v.extend(vec![0.8; 50]);
        let t = isodata_threshold(&gray(&v)).unwrap();
        assert!((t - 0.5).abs() < 1.0 / 255.0, "t = {t}");
    }

    #[test]
    fn binarize_counts() {
        let mut v = vec![0.9; 10];
        v.extend(vec![0.1; 90]);
        let b = binarize(&gray(&v), 0.5).unwrap();
        assert_eq!((b.white_count(), b.black_count()), (10, 90));
        let all_white = binarize(&gray(&[0.6, 0.7]), 0.5).unwrap();
        assert_eq!(area_counts(&all_white), (0, 2));
        let all_black = binarize(&gray(&[0.5, 0.1]), 0.5).unwrap();
        assert_eq!(area_counts(&all_black), (2, 0));
        assert!(binarize(&gray(&[0.5]), 1.5).is_err());
    }

    #[test]
    fn checkerboard_areas() {
        let g = GrayImage::from_fn(8, 6, |x, y| ((x + y) % 2) as f64).unwrap();
        let b = binarize(&g, 0.5).unwrap();
        assert_eq!(area_counts(&b), (24, 24));
    }

    #[test]
    fn binary_constructors() {
        assert_eq!(area_counts(&BinaryMap::all_white(3, 3)), (0, 9));
        assert_eq!(area_counts(&BinaryMap::all_black(3, 3)), (9, 0));
        assert!(BinaryMap::from_bits(2, 2, vec![true]).is_err());
    }

    #[test]
    fn method_names_parse() {
        for m in [
            ThresholdMethod::Otsu,
            ThresholdMethod::Entropy,
            ThresholdMethod::Isodata,
        ] {
            assert_eq!(m.name().parse::<ThresholdMethod>().unwrap(), m);
        }
        assert!("kittler".parse::<ThresholdMethod>().is_err());
    }
}
