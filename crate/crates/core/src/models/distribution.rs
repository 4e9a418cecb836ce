use crate::error::{Error, Result};
use crate::numerics::special::{binomial_log_pmf_vec, log_sum_exp};

/// Exact law of a default count on `{0..n}`, stored as log-probabilities.
///
/// Impossible counts carry `-inf`. Constructors normalize so that the
/// log-sum-exp of the entries is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    n: usize,
    log_pmf: Vec<f64>,
}

impl CountDistribution {
    /// Normalizes `log_weights` (length `n + 1`) into a distribution.
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::Empty("count distribution needs at least one bin".into()));
        }
        if log_weights.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Domain("log-weights contain NaN or +inf".into()));
        }
        let total = log_sum_exp(&log_weights);
        if total == f64::NEG_INFINITY {
            return Err(Error::Degenerate("all log-weights are -inf".into()));
        }
        let n = log_weights.len() - 1;
        let log_pmf = log_weights
            .into_iter()
            .map(|v| (v - total).min(0.0))
            .collect();
        Ok(CountDistribution { n, log_pmf })
    }

    pub(crate) fn from_normalized(log_pmf: Vec<f64>) -> Self {
        Self::from_log_weights(log_pmf).expect("model pmf must have positive mass")
    }

    pub fn binomial(n: usize, p: f64) -> Self {
        Self::from_normalized(binomial_log_pmf_vec(n, p.ln(), (-p).ln_1p()))
    }

    pub fn point_mass(n: usize, h: usize) -> Self {
        assert!(h <= n);
        let mut v = vec![f64::NEG_INFINITY; n + 1];
        v[h] = 0.0;
        CountDistribution { n, log_pmf: v }
    }

    /// Builds a distribution from linear probabilities (normalized).
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        Self::from_log_weights(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    pub fn prob(&self, h: usize) -> f64 {
        self.log_pmf.get(h).map_or(0.0, |v| v.exp())
    }

    pub fn pmf(&self) -> Vec<f64> {
        self.log_pmf.iter().map(|v| v.exp()).collect()
    }

    /// `P(L <= h)` for every `h`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.pmf()
            .into_iter()
            .map(|p| {
                acc += p;
                acc.min(1.0)
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.pmf()
            .iter()
            .enumerate()
            .map(|(h, p)| h as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pmf()
            .iter()
            .enumerate()
            .map(|(h, p)| (h as f64 - m).powi(2) * p)
            .sum()
    }

    /// `E[L(L-1)]`.
    pub fn second_factorial_moment(&self) -> f64 {
        self.pmf()
            .iter()
            .enumerate()
            .map(|(h, p)| (h as f64) * (h as f64 - 1.0) * p)
            .sum()
    }

    /// Largest entrywise probability difference.
    pub fn max_abs_diff(&self, other: &CountDistribution) -> f64 {
        self.pmf()
            .iter()
            .zip(other.pmf())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn total_variation(&self, other: &CountDistribution) -> f64 {
        0.5 * self
            .pmf()
            .iter()
            .zip(other.pmf())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}
