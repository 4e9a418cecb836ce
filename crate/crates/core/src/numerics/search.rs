//! Multi-start simplex search over box-constrained parameters.
//!
//! Each coordinate is mapped to an unconstrained value (logistic for
//! probabilities, softplus for scales). After the simplex runs, coordinates
//! that drifted far toward a bound are snapped onto it and the remaining
//! coordinates re-optimized; the snap is kept when the objective does not get
//! worse.

use super::optimize::{minimize_simplex, SimplexOptions};
use super::transform::{inv_softplus, logistic, logit, softplus, BOUNDARY_THRESHOLD};
use crate::error::{Error, Result};

/// Transformed values beyond this are tried on the bound.
const SNAP_CANDIDATE: f64 = 6.0;
/// Seeds are clamped to this range in transformed space.
const SEED_CLAMP: f64 = 10.0;

/// Admissible range of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// `[0, 1]`.
    Unit,
    /// `[0, 1)`; only the lower end is attainable.
    UnitOpenTop,
    /// `[0, inf)`.
    NonNegative,
    /// Unbounded.
    Free,
}

impl Bound {
    fn to_search(self, x: f64) -> f64 {
        match self {
            Bound::Unit | Bound::UnitOpenTop => logit(x),
            Bound::NonNegative => inv_softplus(x.max(1e-300)),
            Bound::Free => x,
        }
    }

    fn from_search(self, t: f64) -> f64 {
        match self {
            Bound::Unit | Bound::UnitOpenTop => logistic(t),
            Bound::NonNegative => softplus(t),
            Bound::Free => t,
        }
    }

    /// Bound value approached by transformed coordinate `t`, if any.
    fn nearby_bound(self, t: f64, threshold: f64) -> Option<f64> {
        match self {
            Bound::Unit if t > threshold => Some(1.0),
            Bound::Unit | Bound::UnitOpenTop | Bound::NonNegative if t < -threshold => Some(0.0),
            _ => None,
        }
    }

    fn is_bound_value(self, x: f64) -> bool {
        match self {
            Bound::Unit => x == 0.0 || x == 1.0,
            Bound::UnitOpenTop | Bound::NonNegative => x == 0.0,
            Bound::Free => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub simplex: SimplexOptions,
    /// Number of best seeds refined by the simplex.
    pub refine: usize,
    /// Absolute slack allowed when accepting a snap to a bound.
    pub snap_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            simplex: SimplexOptions::default(),
            refine: 3,
            snap_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    /// Per coordinate: sits on a bound.
    pub at_bound: Vec<bool>,
    /// Objective at every seed, in input order.
    pub seed_values: Vec<f64>,
}

/// Minimizes `f` over the box described by `bounds`, starting from `seeds`.
pub fn bounded_search<F>(
    f: F,
    bounds: &[Bound],
    seeds: &[Vec<f64>],
    opts: &SearchOptions,
) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> f64,
{
    if seeds.is_empty() {
        return Err(Error::Empty("no starting points".into()));
    }
    let d = bounds.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(seeds.len());
    for (i, s) in seeds.iter().enumerate() {
        if s.len() != d {
            return Err(Error::Domain(format!("seed {i} has {} coordinates, expected {d}", s.len())));
        }
        scored.push((eval(s), i));
    }
    let seed_values: Vec<f64> = scored.iter().map(|(v, _)| *v).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if !scored[0].0.is_finite() {
        return Err(Error::Optimization("objective is infinite at every seed".into()));
    }

    let free: Vec<usize> = (0..d).collect();
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for &(v, i) in scored.iter().take(opts.refine.max(1)) {
        if !v.is_finite() {
            continue;
        }
        let (x, val, conv) = refine(&eval, bounds, &seeds[i], &free, &opts.simplex)?;
        let better = match &best {
            None => true,
            Some((_, b, _)) => val < *b,
        };
        if better {
            best = Some((x, val, conv));
        }
    }
    let (mut x, mut value, converged) = best.expect("at least one finite seed");
    if scored[0].0 < value {
        x = seeds[scored[0].1].clone();
        value = scored[0].0;
    }

    // snap coordinates lying far toward a bound
    for i in 0..d {
        let t = bounds[i].to_search(x[i]);
        let Some(b) = bounds[i].nearby_bound(t, SNAP_CANDIDATE) else {
            continue;
        };
        let mut trial = x.clone();
        trial[i] = b;
        let rest: Vec<usize> = (0..d)
            .filter(|&j| j != i && !bounds[j].is_bound_value(x[j]))
            .collect();
        let (cand, cv) = if rest.is_empty() {
            let v = eval(&trial);
            (trial, v)
        } else {
            let (c, v, _) = refine(&eval, bounds, &trial, &rest, &opts.simplex)?;
            (c, v)
        };
        if cv <= value + opts.snap_tol {
            x = cand;
            value = cv;
        }
    }
    let at_bound = (0..d)
        .map(|i| {
            bounds[i].is_bound_value(x[i])
                || bounds[i]
                    .nearby_bound(bounds[i].to_search(x[i]), BOUNDARY_THRESHOLD)
                    .is_some()
        })
        .collect();
    Ok(SearchOutcome {
        x,
        value,
        converged,
        at_bound,
        seed_values,
    })
}

/// Simplex over the coordinates in `active`, the others held at `start`.
fn refine<F>(
    eval: &F,
    bounds: &[Bound],
    start: &[f64],
    active: &[usize],
    opts: &SimplexOptions,
) -> Result<(Vec<f64>, f64, bool)>
where
    F: Fn(&[f64]) -> f64,
{
    let assemble = |t: &[f64]| {
        let mut x = start.to_vec();
        for (k, &i) in active.iter().enumerate() {
            x[i] = bounds[i].from_search(t[k]);
        }
        x
    };
    let t0: Vec<f64> = active
        .iter()
        .map(|&i| bounds[i].to_search(start[i]).clamp(-SEED_CLAMP, SEED_CLAMP))
        .collect();
    let scale: Vec<f64> = active
        .iter()
        .map(|&i| if bounds[i] == Bound::Free { 0.25 } else { 1.0 })
        .collect();
    if !eval(&assemble(&t0)).is_finite() {
        return Ok((start.to_vec(), f64::INFINITY, false));
    }
    let res = minimize_simplex(|t| eval(&assemble(t)), &t0, &scale, opts)?;
    Ok((assemble(&res.argmin), res.min, res.converged))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] - 1.5).powi(2);
        let out = bounded_search(f, &[Bound::Unit, Bound::Free], &[vec![0.5, 0.0]], &SearchOptions::default()).unwrap();
        assert!((out.x[0] - 0.3).abs() < 1e-5 && (out.x[1] - 1.5).abs() < 1e-5);
        assert_eq!(out.at_bound, vec![false, false]);
    }

    #[test]
    fn boundary_minimum_is_snapped() {
        // increasing in x0 on [0,1]: optimum on the lower bound
        let f = |x: &[f64]| x[0] + (x[1] - 0.2).powi(2);
        let out = bounded_search(
            f,
            &[Bound::Unit, Bound::NonNegative],
            &[vec![0.5, 1.0], vec![0.1, 0.1]],
            &SearchOptions::default(),
        )
        .unwrap();
        assert_eq!(out.x[0], 0.0);
        assert!(out.at_bound[0] && !out.at_bound[1]);
        assert!((out.x[1] - 0.2).abs() < 1e-5);
    }

    #[test]
    fn never_worse_than_seeds() {
        let f = |x: &[f64]| (10.0 * x[0]).sin() + x[0];
        let seeds: Vec<Vec<f64>> = (1..10).map(|k| vec![k as f64 / 10.0]).collect();
        let out = bounded_search(f, &[Bound::Unit], &seeds, &SearchOptions::default()).unwrap();
        assert!(out.seed_values.iter().all(|&v| out.value <= v + 1e-15));
    }
}
