//! Quadrature rules for expectations against a normal law.
//!
//! Two rule families are provided. [`gauss_hermite`] gives the classical
//! probabilist-normalized rule. [`QuadratureRule::probit_grid`] builds a
//! composite Gauss–Legendre grid on the probit scale `z = mu + sigma * x`,
//! clipped to the range where `Φ(z)` is distinguishable from 0 or 1. The
//! grid is what the mixture models use: it stays accurate when the mixing
//! law is wide (asset correlations near 1, large environmental spread) where
//! a fixed Hermite rule would undersample the binomial kernels.

use serde::{Deserialize, Serialize};

use super::special::std_normal_cdf;
use crate::error::{Error, Result};

/// Which construction produced a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    GaussHermiteProbabilist,
    FixedGrid,
}

/// Nodes and weights with `∫ g(x) φ(x) dx ≈ Σ w_i g(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

/// Probit values beyond this are treated as `Φ(z) ∈ {0, 1}` for pool sizes
/// of practical interest (`n Φ(-9.5) < 1e-16` for `n ≤ 10^5`).
pub const PROBIT_CAP: f64 = 9.5;

/// Standard-normal range covered by the grid; the truncated mass is below 1e-16.
const X_SPAN: f64 = 8.5;

/// Finest refinement level of [`Quadrature::Auto`].
pub const MAX_LEVEL: u32 = 3;

/// Agreement required between successive refinement levels.
pub const CONVERGENCE_TOL: f64 = 1e-9;

const PANEL_POINTS: usize = 8;
const PANEL_WIDTH: f64 = 0.25;

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// Composite grid for `E[g(mu + sigma X)]`, `X ~ N(0,1)`, `sigma > 0`.
    ///
    /// Panels have probit width `min(sigma, 0.25) / 2^level`, eight
    /// Gauss–Legendre points each. Mass of the normal law beyond the probit
    /// caps is carried by a node placed exactly on the cap. Nodes are
    /// returned on the standard scale `x`.
    pub fn probit_grid(mu: f64, sigma: f64, level: u32) -> QuadratureRule {
        assert!(sigma > 0.0 && sigma.is_finite(), "probit grid needs sigma > 0");
        let x_cap_lo = (-PROBIT_CAP - mu) / sigma;
        let x_cap_hi = (PROBIT_CAP - mu) / sigma;
        let lo = (-X_SPAN).max(x_cap_lo);
        let hi = X_SPAN.min(x_cap_hi);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        if lo >= hi {
            // the whole law sits beyond one cap
            let x = if mu < 0.0 { x_cap_lo } else { x_cap_hi };
            return QuadratureRule {
                nodes: vec![x, x],
                weights: vec![0.5, 0.5],
                kind: RuleKind::FixedGrid,
            };
        }
        let width = sigma.min(PANEL_WIDTH) / sigma / f64::from(1u32 << level);
        let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
        let step = (hi - lo) / panels as f64;
        let (gl_x, gl_w) = gauss_legendre_cached();
        if lo > -X_SPAN {
            nodes.push(lo);
            weights.push(std_normal_cdf(lo));
        }
        for k in 0..panels {
            let a = lo + k as f64 * step;
            let mid = a + 0.5 * step;
            for (&t, &w) in gl_x.iter().zip(gl_w) {
                let x = mid + 0.5 * step * t;
                nodes.push(x);
                weights.push(0.5 * step * w * super::special::std_normal_pdf(x));
            }
        }
        if hi < X_SPAN {
            nodes.push(hi);
            weights.push(std_normal_cdf(-hi));
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        QuadratureRule {
            nodes,
            weights,
            kind: RuleKind::FixedGrid,
        }
    }
}

fn gauss_legendre_cached() -> (&'static [f64], &'static [f64]) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = RULE.get_or_init(|| gauss_legendre(PANEL_POINTS));
    (x, w)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Probabilist Gauss–Hermite rule, normalized so the weights sum to one.
///
/// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix of the
/// probabilist Hermite recurrence, weights the squared first components of
/// its normalized eigenvectors.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if !(2..=256).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let n = order;
    let mut diag = vec![0.0f64; n];
    let mut off: Vec<f64> = (1..=n).map(|k| if k < n { (k as f64).sqrt() } else { 0.0 }).collect();
    let mut first = vec![0.0f64; n];
    first[0] = 1.0;
    tridiagonal_ql(&mut diag, &mut off, &mut first)?;
    let mut pairs: Vec<(f64, f64)> = diag.into_iter().zip(first.into_iter().map(|z| z * z)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: RuleKind::GaussHermiteProbabilist,
    })
}

/// Implicit QL on a symmetric tridiagonal matrix. `off[i]` couples rows `i`
/// and `i + 1`. Only the first row of the eigenvector matrix is tracked.
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], first: &mut [f64]) -> Result<()> {
    let n = diag.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::QuadratureNonConvergence(
                    "tridiagonal eigen-solve did not converge".into(),
                ));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let fz = first[i + 1];
                first[i + 1] = s * first[i] + c * fz;
                first[i] = c * first[i] - s * fz;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// How mixture integrals are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// A single grid at the given refinement level.
    Fixed(u32),
    /// Refine from level 0 until successive levels agree within
    /// [`CONVERGENCE_TOL`], up to [`MAX_LEVEL`].
    Auto,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Auto
    }
}

impl Quadrature {
    /// Evaluates `eval(level)` under this policy. For `Auto`, the returned
    /// vector is the finer of the first pair of levels that agree entrywise.
    pub fn resolve<F>(self, what: &str, mut eval: F) -> Result<(Vec<f64>, u32)>
    where
        F: FnMut(u32) -> Vec<f64>,
    {
        match self {
            Quadrature::Fixed(level) => Ok((eval(level), level)),
            Quadrature::Auto => {
                let mut prev = eval(0);
                for level in 1..=MAX_LEVEL {
                    let next = eval(level);
                    let diff = prev
                        .iter()
                        .zip(&next)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if diff <= CONVERGENCE_TOL {
                        return Ok((next, level));
                    }
                    prev = next;
                }
                Err(Error::QuadratureNonConvergence(format!(
                    "{what}: levels {} and {} still differ",
                    MAX_LEVEL - 1,
                    MAX_LEVEL
                )))
            }
        }
    }
}
