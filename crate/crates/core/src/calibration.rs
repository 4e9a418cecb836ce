//! Moment calibration of the three models to a target `(n, m, rho)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{activation_probability, DavisLo, ModelParams, Torri, Vasicek};
use crate::moments::{davis_lo_moments, torri_moments, vasicek_moments};
use crate::numerics::{find_root, Quadrature};

/// Default tolerance on the moment residuals.
pub const DEFAULT_TOL: f64 = 1e-10;

const ROOT_TOL: f64 = 1e-15;

/// Pool size with the mean default rate and pairwise correlation to match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub n: usize,
    pub m: f64,
    pub rho: f64,
}

impl CalibrationTarget {
    /// The representative setting used throughout the examples.
    pub const REFERENCE: CalibrationTarget = CalibrationTarget {
        n: 200,
        m: 0.02,
        rho: 0.08,
    };

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Domain(format!("pool size {} < 2", self.n)));
        }
        if !(self.m > 0.0 && self.m < 1.0) {
            return Err(Error::Domain(format!("target m = {} outside (0,1)", self.m)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Domain(format!("target rho = {} outside (0,1)", self.rho)));
        }
        Ok(())
    }

    /// Joint default probability implied by `(m, rho)`.
    pub fn p11(&self) -> f64 {
        self.m * self.m + self.rho * self.m * (1.0 - self.m)
    }
}

/// A point `(p, u, v)` on the Torri iso-moment manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorriBranch {
    pub p: f64,
    pub u: f64,
    pub v: f64,
    pub pi_n: f64,
}

impl TorriBranch {
    pub fn params(&self) -> Torri {
        Torri {
            p: self.p,
            u: self.u,
            v: self.v,
        }
    }
}

fn check_residual(what: &str, got_m: f64, got_rho: f64, t: &CalibrationTarget, tol: f64) -> Result<()> {
    let (dm, dr) = ((got_m - t.m).abs(), (got_rho - t.rho).abs());
    if dm <= tol && dr <= tol {
        Ok(())
    } else {
        Err(Error::Optimization(format!(
            "{what}: residuals |dm| = {dm:.3e}, |drho| = {dr:.3e} exceed {tol:.1e}"
        )))
    }
}

/// Idiosyncratic rate `p` giving mean `m` at contagion `q`.
fn davis_lo_p_for_mean(m: f64, q: f64, n: usize) -> Result<f64> {
    let mean = |p: f64| davis_lo_moments(&DavisLo { p, q }, n).map(|s| s.m).unwrap_or(f64::NAN);
    find_root(|p| mean(p) - m, 0.0, m, ROOT_TOL)
}

/// Solves `(p, q)`: outer root in `q` on the correlation, inner root in `p`
/// on the mean.
pub fn calibrate_davis_lo(target: &CalibrationTarget, tol: f64) -> Result<DavisLo> {
    target.validate()?;
    let n = target.n;
    let rho_at = |q: f64| -> f64 {
        match davis_lo_p_for_mean(target.m, q, n) {
            Ok(p) => davis_lo_moments(&DavisLo { p, q }, n).map(|s| s.rho).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        }
    };
    let sup = rho_at(1.0);
    if !(sup >= target.rho) {
        return Err(Error::Infeasible(format!(
            "Davis-Lo cannot reach rho = {} at m = {}, n = {} (max {sup})",
            target.rho, target.m, n
        )));
    }
    let q = find_root(|q| rho_at(q) - target.rho, 0.0, 1.0, ROOT_TOL)?;
    let p = davis_lo_p_for_mean(target.m, q, n)?;
    let params = DavisLo { p, q };
    let s = davis_lo_moments(&params, n)?;
    check_residual("Davis-Lo calibration", s.m, s.rho, target, tol)?;
    Ok(params)
}

/// Solves `(u, v)` at a fixed idiosyncratic rate `p`.
///
/// The mean equation fixes `1 - u` given `v`; the remaining residual in the
/// joint default probability is decreasing in `v` and is solved on
/// `[v_min, 1]`, where `v_min` makes `u = 0`.
pub fn calibrate_torri_at_p(target: &CalibrationTarget, p: f64, tol: f64) -> Result<TorriBranch> {
    target.validate()?;
    if !(p > 0.0 && p < target.m) {
        return Err(Error::Infeasible(format!(
            "Torri idiosyncratic rate p = {p} must lie in (0, m = {})",
            target.m
        )));
    }
    let n = target.n;
    let nf = n as f64;
    let excess = (target.m - p) / (1.0 - p);
    // π_{n-1}(p v_min) = excess
    let pv_min = -((-excess).ln_1p() / (nf - 1.0)).exp_m1();
    let v_min = pv_min / p;
    if v_min > 1.0 {
        return Err(Error::Infeasible(format!(
            "p = {p} too small: the mean cannot be reached even with v = 1"
        )));
    }
    let at_v = |v: f64| -> Torri {
        let pi = -((nf - 1.0) * (-p * v).ln_1p()).exp_m1();
        let u = (1.0 - excess / pi).clamp(0.0, 1.0);
        Torri { p, u, v }
    };
    let p11 = target.p11();
    let resid = |v: f64| torri_moments(&at_v(v), n).map(|s| s.p11 - p11).unwrap_or(f64::NAN);
    let (lo, hi) = (v_min, 1.0);
    let (r_lo, r_hi) = (resid(lo), resid(hi));
    if !(r_lo >= 0.0 && r_hi <= 0.0) {
        return Err(Error::Infeasible(format!(
            "no Torri branch at p = {p} for m = {}, rho = {}",
            target.m, target.rho
        )));
    }
    let v = find_root(resid, lo, hi, ROOT_TOL)?;
    let params = at_v(v);
    let s = torri_moments(&params, n)?;
    check_residual("Torri calibration", s.m, s.rho, target, tol)?;
    Ok(TorriBranch {
        p,
        u: params.u,
        v: params.v,
        pi_n: activation_probability(&params, n).pi_n,
    })
}

/// One grid point of a manifold trace; `branch` is `None` where infeasible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifoldPoint {
    pub p: f64,
    pub branch: Option<TorriBranch>,
}

pub fn trace_torri_manifold(target: &CalibrationTarget, p_grid: &[f64]) -> Vec<ManifoldPoint> {
    p_grid
        .iter()
        .map(|&p| ManifoldPoint {
            p,
            branch: calibrate_torri_at_p(target, p, DEFAULT_TOL).ok(),
        })
        .collect()
}

/// `p = m`, asset correlation by root finding on the increasing map
/// `rho_a -> rho`.
pub fn calibrate_vasicek(target: &CalibrationTarget, tol: f64) -> Result<Vasicek> {
    target.validate()?;
    let p = target.m;
    let rho_at = |rho_a: f64| {
        vasicek_moments(&Vasicek { p, rho_a }, Quadrature::Auto)
            .map(|s| s.rho)
            .unwrap_or(f64::NAN)
    };
    let rho_a = find_root(|r| rho_at(r) - target.rho, 0.0, 1.0 - 1e-9, ROOT_TOL)?;
    let params = Vasicek { p, rho_a };
    let s = vasicek_moments(&params, Quadrature::Auto)?;
    check_residual("Vasicek calibration", s.m, s.rho, target, tol)?;
    Ok(params)
}

/// Named parameter sets calibrated to [`CalibrationTarget::REFERENCE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    DavisLo,
    TorriHigh,
    TorriMid,
    TorriLow,
    Vasicek,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::DavisLo,
        Preset::TorriHigh,
        Preset::TorriMid,
        Preset::TorriLow,
        Preset::Vasicek,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::DavisLo => "davislo-ref",
            Preset::TorriHigh => "torri-high",
            Preset::TorriMid => "torri-mid",
            Preset::TorriLow => "torri-low",
            Preset::Vasicek => "vasicek-ref",
        }
    }

    pub fn from_name(s: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Idiosyncratic rate selecting the Torri branch, if any.
    pub fn torri_p(self) -> Option<f64> {
        match self {
            Preset::TorriHigh => Some(0.003109),
            Preset::TorriMid => Some(0.009436),
            Preset::TorriLow => Some(0.015762),
            _ => None,
        }
    }

    pub fn params(self) -> Result<ModelParams> {
        let t = CalibrationTarget::REFERENCE;
        Ok(match self {
            Preset::DavisLo => ModelParams::DavisLo(calibrate_davis_lo(&t, DEFAULT_TOL)?),
            Preset::Vasicek => ModelParams::Vasicek(calibrate_vasicek(&t, DEFAULT_TOL)?),
            torri => {
                let p = torri.torri_p().expect("torri preset");
                ModelParams::Torri(calibrate_torri_at_p(&t, p, DEFAULT_TOL)?.params())
            }
        })
    }
}
