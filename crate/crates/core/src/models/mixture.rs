use crate::error::Result;
use crate::numerics::special::{ln_std_normal_cdf, std_normal_cdf, LogSumAcc};
use crate::numerics::{Quadrature, QuadratureRule};

use super::CountDistribution;

/// Linear-space mixture sums below this are redone in log space.
pub(crate) const LINEAR_FLOOR: f64 = 1e-280;

/// Mixing law `p = Φ(Y)`, `Y ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitNormal {
    pub mu: f64,
    pub sigma: f64,
}

/// A default probability together with accurate logs of `p` and `1 - p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitPoint {
    pub p: f64,
    pub ln_p: f64,
    pub ln_1mp: f64,
}

impl ProbitPoint {
    pub fn from_probit(z: f64) -> Self {
        ProbitPoint {
            p: std_normal_cdf(z),
            ln_p: ln_std_normal_cdf(z),
            ln_1mp: ln_std_normal_cdf(-z),
        }
    }
}

impl ProbitNormal {
    /// Discretized mixing law as `(ln weight, point)` pairs.
    pub fn nodes(&self, level: u32) -> Vec<(f64, ProbitPoint)> {
        if self.sigma == 0.0 {
            return vec![(0.0, ProbitPoint::from_probit(self.mu))];
        }
        let rule = QuadratureRule::probit_grid(self.mu, self.sigma, level);
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| (w.ln(), ProbitPoint::from_probit(self.mu + self.sigma * x)))
            .collect()
    }
}

/// Mixes a conditional log-pmf kernel on `{0..n}` over the probit-normal law.
pub fn probit_mixture_pmf<K>(
    mix: &ProbitNormal,
    n: usize,
    quad: Quadrature,
    kernel: K,
) -> Result<CountDistribution>
where
    K: Fn(&ProbitPoint) -> Vec<f64>,
{
    let quad = if mix.sigma == 0.0 {
        Quadrature::Fixed(0)
    } else {
        quad
    };
    let mut by_level: Vec<(u32, Vec<f64>)> = Vec::new();
    let (_, level) = quad.resolve("probit mixture pmf", |level| {
        let mut acc = vec![LogSumAcc::default(); n + 1];
        for (ln_w, pt) in mix.nodes(level) {
            for (slot, v) in acc.iter_mut().zip(kernel(&pt)) {
                slot.add(ln_w + v);
            }
        }
        let logs: Vec<f64> = acc.iter().map(LogSumAcc::value).collect();
        let probs = logs.iter().map(|v| v.exp()).collect();
        by_level.push((level, logs));
        probs
    })?;
    let logs = by_level
        .into_iter()
        .find(|(l, _)| *l == level)
        .map(|(_, v)| v)
        .expect("resolved level was evaluated");
    CountDistribution::from_log_weights(logs)
}

/// `ln P(L = h)` for each `(n, h)` item under the mixture, at a fixed grid
/// level. The kernel returns the conditional log-probability.
pub fn probit_mixture_log_probs_at<K>(
    mix: &ProbitNormal,
    level: u32,
    items: &[(usize, usize)],
    kernel_at: K,
) -> Vec<f64>
where
    K: Fn(&ProbitPoint, usize, usize) -> f64,
{
    let nodes = mix.nodes(level);
    items
        .iter()
        .map(|&(n, h)| {
            if h > n {
                return f64::NEG_INFINITY;
            }
            let sum: f64 = nodes
                .iter()
                .map(|(ln_w, pt)| (ln_w + kernel_at(pt, n, h)).exp())
                .sum();
            if sum > LINEAR_FLOOR {
                return sum.ln();
            }
            let mut acc = LogSumAcc::default();
            for (ln_w, pt) in &nodes {
                acc.add(ln_w + kernel_at(pt, n, h));
            }
            acc.value()
        })
        .collect()
}
