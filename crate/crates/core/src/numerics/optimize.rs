//! Derivative-free optimization and 1-D root finding.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent minimization of a unimodal `f` on `[lo, hi]`.
///
/// The endpoints are also evaluated so that boundary minima are returned
/// exactly. Non-finite evaluations abort with [`Error::Optimization`].
pub fn minimize_scalar<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::Domain(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Optimization(format!("objective is {v} at {x}")))
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = eval(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = 0.25 * tol + 1e-15 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = eval(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    let mut best = (x, fx);
    for end in [lo, hi] {
        let fe = eval(end)?;
        if fe < best.1 {
            best = (end, fe);
        }
    }
    Ok(best)
}

/// Root of `f` on a sign-changing bracket `[lo, hi]` (Brent's method).
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Optimization("non-finite value at bracket end".into()));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Infeasible(format!(
            "no sign change on [{lo}, {hi}] (f = {fa}, {fb})"
        )));
    }
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Optimization(format!("non-finite value at {b}")));
        }
    }
    Ok(b)
}

/// Options for [`minimize_simplex`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iter: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 2000,
            f_tol: 1e-10,
            x_tol: 1e-7,
            restarts: 3,
        }
    }
}

/// Result of a simplex search.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub argmin: Vec<f64>,
    pub min: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Nelder–Mead minimization with restarts at the incumbent.
///
/// Non-finite objective values are treated as `+inf` vertices. The search is
/// deterministic given its inputs.
pub fn minimize_simplex<F>(
    mut f: F,
    x0: &[f64],
    scale: &[f64],
    opts: &SimplexOptions,
) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if x0.len() != scale.len() {
        return Err(Error::Domain(format!(
            "start has {} coordinates but scale has {}",
            x0.len(),
            scale.len()
        )));
    }
    if x0.is_empty() {
        return Err(Error::Domain("zero-dimensional search".into()));
    }
    let mut evaluations = 0usize;
    let mut objective = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = objective(x0);
    if !f0.is_finite() {
        return Err(Error::Domain("objective is not finite at the start point".into()));
    }
    let mut best = x0.to_vec();
    let mut fbest = f0;
    let mut converged = false;
    for round in 0..=opts.restarts {
        let (x, fx, ok) = nelder_mead_run(&mut objective, &best, fbest, scale, opts);
        let improved = fbest - fx;
        if fx <= fbest {
            best = x;
            fbest = fx;
        }
        converged = ok;
        if round > 0 && ok && improved <= opts.f_tol * (1.0 + fbest.abs()) {
            break;
        }
    }
    Ok(SimplexResult {
        argmin: best,
        min: fbest,
        converged,
        evaluations,
    })
}

fn nelder_mead_run<F>(
    f: &mut F,
    start: &[f64],
    fstart: f64,
    scale: &[f64],
    opts: &SimplexOptions,
) -> (Vec<f64>, f64, bool)
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(dim + 1);
    pts.push(start.to_vec());
    vals.push(fstart);
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += scale[i];
        vals.push(f(&p));
        pts.push(p);
    }
    let mut order: Vec<usize> = (0..=dim).collect();
    for _ in 0..opts.max_iter {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let ib = order[0];
        let iw = order[dim];
        let isw = order[dim - 1];
        let fb = vals[ib];
        let fw = vals[iw];
        let spread_ok = if fw.is_finite() {
            (fw - fb).abs() <= opts.f_tol * (1.0 + fb.abs())
        } else {
            false
        };
        let size = pts
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[ib])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread_ok && size <= opts.x_tol {
            return (pts[ib].clone(), fb, true);
        }

        let mut centroid = vec![0.0; dim];
        for &i in &order[..dim] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[iw])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < fb {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[iw] = xe;
                vals[iw] = fe;
            } else {
                pts[iw] = xr;
                vals[iw] = fr;
            }
            continue;
        }
        if fr < vals[isw] {
            pts[iw] = xr;
            vals[iw] = fr;
            continue;
        }
        let (xc, fc) = if fr < fw {
            let xc = along(-0.5);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < fr.min(fw) {
            pts[iw] = xc;
            vals[iw] = fc;
            continue;
        }
        // shrink towards the best vertex
        let xb = pts[ib].clone();
        for i in 0..=dim {
            if i == ib {
                continue;
            }
            for (p, b) in pts[i].iter_mut().zip(&xb) {
                *p = b + 0.5 * (*p - b);
            }
            vals[i] = f(&pts[i]);
        }
    }
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    (pts[order[0]].clone(), vals[order[0]], false)
}
