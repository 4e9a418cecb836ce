//! Kullback–Leibler divergence between count laws and projection of a
//! target law onto a model family.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{calibrate_davis_lo, calibrate_torri_at_p, calibrate_vasicek, CalibrationTarget};
use crate::error::{Error, Result};
use crate::hierarchy::{hier_pmf, solve_sigma_for_r, HierParams};
use crate::models::{
    davis_lo_pmf, torri_pmf_mgf, vasicek_pmf, CountDistribution, Family, ModelParams, Vasicek,
};
use crate::moments::pmf_moments;
use crate::numerics::search::{bounded_search, Bound, SearchOptions};
use crate::numerics::transform::logistic;
use crate::numerics::Quadrature;

/// Log-probability floor applied to candidate laws during the search only.
pub const LOG_FLOOR: f64 = -700.0;

/// `Σ P(h) ln(P(h)/Q(h))` over `P(h) > 0`; `+inf` when `Q` misses mass of `P`.
pub fn kl_divergence(p: &CountDistribution, q: &CountDistribution) -> Result<f64> {
    if p.n() != q.n() {
        return Err(Error::SupportMismatch {
            left: p.n(),
            right: q.n(),
        });
    }
    Ok(kl_terms(p.log_pmf(), q.log_pmf(), f64::NEG_INFINITY).max(0.0))
}

fn kl_terms(lp: &[f64], lq: &[f64], floor: f64) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in lp.iter().zip(lq) {
        if a == f64::NEG_INFINITY {
            continue;
        }
        let b = b.max(floor);
        if b == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        acc += a.exp() * (a - b);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub search: SearchOptions,
    /// Seeds per parameter, evenly spaced in transformed coordinates.
    pub grid_points: usize,
    /// Grid level for the Vasicek mixture during the search.
    pub level: u32,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            search: SearchOptions {
                refine: 4,
                ..SearchOptions::default()
            },
            grid_points: 5,
            level: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub family: Family,
    pub kl: f64,
    pub params: ModelParams,
    pub converged: bool,
    /// Any parameter sits on the edge of its range.
    pub boundary: bool,
    pub at_bound: Vec<&'static str>,
}

pub(crate) fn parameter_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::DavisLo => &["p", "q"],
        Family::Torri => &["p", "u", "v"],
        Family::Vasicek => &["p", "rho_a"],
    }
}

pub(crate) fn parameter_bounds(family: Family) -> Vec<Bound> {
    match family {
        Family::DavisLo => vec![Bound::Unit; 2],
        Family::Torri => vec![Bound::Unit; 3],
        Family::Vasicek => vec![Bound::Unit, Bound::UnitOpenTop],
    }
}

/// Fast count law for the search loop.
fn search_pmf(params: &ModelParams, n: usize, level: u32) -> Option<CountDistribution> {
    params.validate().ok()?;
    match params {
        ModelParams::DavisLo(m) => Some(davis_lo_pmf(m, n)),
        ModelParams::Torri(m) => Some(torri_pmf_mgf(m, n)),
        ModelParams::Vasicek(m) => vasicek_pmf(m, n, Quadrature::Fixed(level)).ok(),
    }
}

/// Tensor grid of seeds, `k` per coordinate over transformed `[-10, 10]`.
pub(crate) fn grid_seeds(dim: usize, k: usize) -> Vec<Vec<f64>> {
    let k = k.max(1);
    let axis: Vec<f64> = (0..k)
        .map(|i| {
            let t = if k == 1 { 0.0 } else { -10.0 + 20.0 * i as f64 / (k - 1) as f64 };
            logistic(t)
        })
        .collect();
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Moment-matched starting points for `family` at the target's `(m, rho)`.
pub(crate) fn moment_seeds(family: Family, n: usize, m: f64, rho: f64) -> Vec<Vec<f64>> {
    let target = CalibrationTarget { n, m, rho };
    if target.validate().is_err() {
        return Vec::new();
    }
    match family {
        Family::DavisLo => calibrate_davis_lo(&target, 1e-6)
            .map(|d| vec![vec![d.p, d.q]])
            .unwrap_or_default(),
        Family::Vasicek => calibrate_vasicek(&target, 1e-6)
            .map(|v| vec![vec![v.p, v.rho_a.min(0.999)]])
            .unwrap_or_default(),
        Family::Torri => [0.05, 0.2, 0.4, 0.6, 0.8, 0.95]
            .iter()
            .filter_map(|f| calibrate_torri_at_p(&target, f * m, 1e-6).ok())
            .map(|b| vec![b.p, b.u, b.v])
            .collect(),
    }
}

/// Closest member of `family` to `target` in KL divergence.
pub fn kl_project(
    target: &CountDistribution,
    family: Family,
    opts: &ProjectionOptions,
) -> Result<ProjectionResult> {
    let n = target.n();
    let lp = target.log_pmf();
    let objective = |x: &[f64]| {
        let params = ModelParams::from_vec(family, x);
        match search_pmf(&params, n, opts.level) {
            Some(q) => kl_terms(lp, q.log_pmf(), LOG_FLOOR),
            None => f64::INFINITY,
        }
    };
    let mut seeds = grid_seeds(family.dimension(), opts.grid_points);
    if n >= 2 {
        let s = pmf_moments(target)?;
        seeds.extend(moment_seeds(family, n, s.m, s.rho));
    }
    let out = bounded_search(objective, &parameter_bounds(family), &seeds, &opts.search)?;
    let params = ModelParams::from_vec(family, &out.x);
    let fitted = params.pmf(n, Quadrature::Auto)?;
    let kl = kl_divergence(target, &fitted)?;
    let names = parameter_names(family);
    let at_bound: Vec<&'static str> = out
        .at_bound
        .iter()
        .zip(names)
        .filter(|(b, _)| **b)
        .map(|(_, name)| *name)
        .collect();
    Ok(ProjectionResult {
        family,
        kl,
        params,
        converged: out.converged,
        boundary: !at_bound.is_empty(),
        at_bound,
    })
}

/// One point of a KL-versus-variance-ratio curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub r: f64,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    /// Divergence from the hierarchical law to its Vasicek projection.
    pub kl: Option<f64>,
    pub vasicek: Option<Vasicek>,
    pub error: Option<String>,
}

/// For each `r`, builds the hierarchical law with variance ratio `r` and
/// mean rate `base_m`, then projects it onto the Vasicek family.
pub fn kl_curve_vs_r(
    structural: &ModelParams,
    n: usize,
    r_grid: &[f64],
    base_m: f64,
    opts: &ProjectionOptions,
) -> Vec<CurvePoint> {
    r_grid
        .par_iter()
        .map(|&r| {
            let attempt = || -> Result<(f64, f64, ProjectionResult)> {
                let (mu, sigma) = solve_sigma_for_r(structural, n, r, base_m)?;
                let hp = HierParams::new(mu, sigma, *structural)?;
                let target = hier_pmf(&hp, n, Quadrature::Auto)?;
                Ok((mu, sigma, kl_project(&target, Family::Vasicek, opts)?))
            };
            match attempt() {
                Ok((mu, sigma, proj)) => CurvePoint {
                    r,
                    mu: Some(mu),
                    sigma: Some(sigma),
                    kl: Some(proj.kl),
                    vasicek: match proj.params {
                        ModelParams::Vasicek(v) => Some(v),
                        _ => None,
                    },
                    error: None,
                },
                Err(e) => CurvePoint {
                    r,
                    mu: None,
                    sigma: None,
                    kl: None,
                    vasicek: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
