//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use num::BigInt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use hazelift::raster::GrayImage;
use hazelift::threshold::{cut_value, BINS};

/// Random histogram with a random number of occupied bins, so that gaps and
/// sparse layouts are common.
pub fn random_histogram(rng: &mut ChaCha8Rng) -> [u64; BINS] {
    let mut h = [0u64; BINS];
    let occupied = rng.gen_range(2..=BINS);
    for _ in 0..occupied {
        h[rng.gen_range(0..BINS)] += rng.gen_range(1..5000);
    }
    if h.iter().filter(|&&c| c > 0).count() < 2 {
        h[0] += 1;
        h[BINS - 1] += 1;
    }
    h
}

/// Exhaustive Otsu with exact arithmetic. The between-class variance
/// `w0 w1 (mu0 - mu1)^2` equals `(s0 n1 - s1 n0)^2 / (n^2 n0 n1)`; scores are
/// compared as unreduced big-integer fractions. First maximizer wins.
pub fn otsu_oracle_cut(h: &[u64; BINS]) -> usize {
    let n: u64 = h.iter().sum();
    let mut best: Option<(usize, BigInt, BigInt)> = None;
    for k in 0..BINS - 1 {
        let n0: u64 = h[..=k].iter().sum();
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u64 = h[..=k].iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
        let s1: u64 = h[k + 1..]
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + k + 1) as u64 * c)
            .sum();
        let diff = BigInt::from(s0) * BigInt::from(n1) - BigInt::from(s1) * BigInt::from(n0);
        let num = &diff * &diff;
        let den = BigInt::from(n) * BigInt::from(n) * BigInt::from(n0) * BigInt::from(n1);
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => &num * bd > bn * &den,
        };
        if better {
            best = Some((k, num, den));
        }
    }
    best.unwrap().0
}

/// Threshold reported for a winning cut: the centre of the run of empty bins
/// that follows it.
pub fn gap_threshold(h: &[u64; BINS], k: usize) -> f64 {
    let next = (k + 1..BINS).find(|&i| h[i] > 0).unwrap();
    cut_value((k + next - 1) as f64 / 2.0)
}

/// Two groups drawn uniformly inside non-overlapping intervals whose gap is
/// at least as wide as either interval.
pub fn two_groups(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let spread = rng.gen_range(0.05..1.0);
    let gap = spread * rng.gen_range(1.0..4.0);
    let base = rng.gen_range(-5.0..5.0);
    let k = rng.gen_range(1..n);
    let mut pts: Vec<f64> = (0..k).map(|_| base + rng.gen_range(0.0..spread)).collect();
    pts.extend((k..n).map(|_| base + spread + gap + rng.gen_range(0.0..spread)));
    pts
}

/// Partition of minimal within-cluster squared error among all 2^(n-1)
/// two-way splits, as a label vector with point 0 in cluster 0.
pub fn exhaustive_partition(pts: &[f64]) -> Vec<usize> {
    let n = pts.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n)
            .map(|i| {
                if i == 0 {
                    0
                } else {
                    ((mask >> (i - 1)) & 1) as usize
                }
            })
            .collect();
        if labels.iter().all(|&l| l == 0) {
            continue;
        }
        let mut cost = 0.0;
        for c in 0..2 {
            let members: Vec<f64> = pts
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(&p, _)| p)
                .collect();
            let m = members.iter().sum::<f64>() / members.len() as f64;
            cost += members.iter().map(|p| (p - m).powi(2)).sum::<f64>();
        }
        if cost < best.0 {
            best = (cost, labels);
        }
    }
    best.1
}

pub fn canonical(labels: &[usize]) -> Vec<usize> {
    labels
        .iter()
        .map(|&l| usize::from(l != labels[0]))
        .collect()
}

/// SSIM from its definition: Gaussian-weighted two-pass moments in every
/// 11x11 window that fits, averaged.
#[allow(clippy::needless_range_loop)]
pub fn mssim_oracle(a: &GrayImage, b: &GrayImage) -> f64 {
    let (w, h) = a.dims();
    let sigma: f64 = 1.5;
    let mut k = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (j, row) in k.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let pa = |x: usize, y: usize| a.data()[y * w + x];
    let pb = |x: usize, y: usize| b.data()[y * w + x];
    let mut acc = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = k[j][i] / total;
                    ma += wt * pa(x0 + i, y0 + j);
                    mb += wt * pb(x0 + i, y0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = k[j][i] / total;
                    let (da, db) = (pa(x0 + i, y0 + j) - ma, pb(x0 + i, y0 + j) - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}
