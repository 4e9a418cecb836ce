//! Helpers shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const MIN_EXPECTED: f64 = 5.0;

/// Upper `level` quantile of the chi-square law with `df` degrees of freedom.
pub fn chi2_quantile(df: usize, level: f64) -> f64 {
    ChiSquared::new(df as f64).expect("positive df").inverse_cdf(level)
}

/// Histogram of `draws` on `{0..=n}`.
pub fn histogram(draws: &[usize], n: usize) -> Vec<u64> {
    let mut h = vec![0u64; n + 1];
    for &d in draws {
        h[d] += 1;
    }
    h
}

/// Consecutive bins merged until each has at least `min_weight` under `weight`.
fn pooled_bins(weight: &[f64], min_weight: f64) -> Vec<(usize, usize)> {
    let mut bins = Vec::new();
    let (mut start, mut acc) = (0, 0.0);
    for (i, w) in weight.iter().enumerate() {
        acc += w;
        if acc >= min_weight {
            bins.push((start, i + 1));
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < weight.len() {
        match bins.last_mut() {
            Some(last) => last.1 = weight.len(),
            None => bins.push((0, weight.len())),
        }
    }
    bins
}

/// Goodness-of-fit statistic against `probs`, bins pooled to expected >= 5.
/// Returns `(statistic, degrees of freedom)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> (f64, usize) {
    let total: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * total as f64).collect();
    let bins = pooled_bins(&expected, MIN_EXPECTED);
    let stat = bins
        .iter()
        .map(|&(a, b)| {
            let o: u64 = observed[a..b].iter().sum();
            let e: f64 = expected[a..b].iter().sum();
            (o as f64 - e).powi(2) / e
        })
        .sum();
    (stat, bins.len().saturating_sub(1))
}

/// Two-sample homogeneity statistic for equal-size samples, bins pooled so
/// the expected count per sample is at least 5.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let combined: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) as f64).collect();
    let min_combined = MIN_EXPECTED * (na + nb) / na.min(nb);
    let bins = pooled_bins(&combined, min_combined);
    let mut stat = 0.0;
    for &(lo, hi) in &bins {
        let oa: u64 = a[lo..hi].iter().sum();
        let ob: u64 = b[lo..hi].iter().sum();
        let c = (oa + ob) as f64;
        let (ea, eb) = (c * na / (na + nb), c * nb / (na + nb));
        stat += (oa as f64 - ea).powi(2) / ea + (ob as f64 - eb).powi(2) / eb;
    }
    (stat, bins.len().saturating_sub(1))
}
