//! Maximum-likelihood fitting of annual default panels and AIC selection.
//!
//! Observations are grouped by pool size so each distinct `n_t` is handled
//! once per likelihood evaluation. Hierarchical specifications share one
//! probit grid across years.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_davis_lo, calibrate_torri_at_p, calibrate_vasicek, CalibrationTarget, Preset,
};
use crate::data::Panel;
use crate::error::{Error, Result};
use crate::hierarchy::{hier_moments, mu_for_mean, HierParams};
use crate::models::{
    torri_mixture_log_probs, DavisLo, DavisLoTable, Family, ModelParams, ProbitNormal, Torri, Vasicek,
};
use crate::moments::{aggregate_moments, empirical_moments, MomentSummary};
use crate::numerics::search::{bounded_search, Bound, SearchOptions};
use crate::numerics::{Quadrature, SimplexOptions};

/// The five fitted specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specification {
    DavisLo,
    Torri,
    Vasicek,
    HierDavisLo,
    HierTorri,
}

impl Specification {
    pub const ALL: [Specification; 5] = [
        Specification::DavisLo,
        Specification::Torri,
        Specification::Vasicek,
        Specification::HierDavisLo,
        Specification::HierTorri,
    ];

    pub const IID: [Specification; 3] =
        [Specification::Torri, Specification::DavisLo, Specification::Vasicek];

    pub fn name(self) -> &'static str {
        match self {
            Specification::DavisLo => "davis_lo",
            Specification::Torri => "torri",
            Specification::Vasicek => "vasicek",
            Specification::HierDavisLo => "hier_davis_lo",
            Specification::HierTorri => "hier_torri",
        }
    }

    /// Number of free parameters used in the AIC.
    pub fn dimension(self) -> usize {
        match self {
            Specification::DavisLo | Specification::Vasicek => 2,
            Specification::Torri | Specification::HierDavisLo => 3,
            Specification::HierTorri => 4,
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Specification::HierDavisLo | Specification::HierTorri)
    }

    pub fn family(self) -> Family {
        match self {
            Specification::DavisLo | Specification::HierDavisLo => Family::DavisLo,
            Specification::Torri | Specification::HierTorri => Family::Torri,
            Specification::Vasicek => Family::Vasicek,
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Specification::DavisLo => &["p", "q"],
            Specification::Torri => &["p", "u", "v"],
            Specification::Vasicek => &["p", "rho_a"],
            Specification::HierDavisLo => &["mu", "sigma", "q"],
            Specification::HierTorri => &["mu", "sigma", "u", "v"],
        }
    }

    fn bounds(self) -> Vec<Bound> {
        match self {
            Specification::DavisLo => vec![Bound::Unit; 2],
            Specification::Torri => vec![Bound::Unit; 3],
            Specification::Vasicek => vec![Bound::Unit, Bound::UnitOpenTop],
            Specification::HierDavisLo => vec![Bound::Free, Bound::NonNegative, Bound::Unit],
            Specification::HierTorri => {
                vec![Bound::Free, Bound::NonNegative, Bound::Unit, Bound::Unit]
            }
        }
    }

    /// Parameters from a flat vector in [`Self::parameter_names`] order.
    pub fn params_from_vec(self, x: &[f64]) -> FittedParams {
        match self {
            Specification::DavisLo => FittedParams::Model(ModelParams::from_vec(Family::DavisLo, x)),
            Specification::Torri => FittedParams::Model(ModelParams::from_vec(Family::Torri, x)),
            Specification::Vasicek => FittedParams::Model(ModelParams::from_vec(Family::Vasicek, x)),
            Specification::HierDavisLo => FittedParams::Hier(HierParams {
                mu: x[0],
                sigma: x[1],
                structural: ModelParams::DavisLo(DavisLo { p: 0.0, q: x[2] }),
            }),
            Specification::HierTorri => FittedParams::Hier(HierParams {
                mu: x[0],
                sigma: x[1],
                structural: ModelParams::Torri(Torri {
                    p: 0.0,
                    u: x[2],
                    v: x[3],
                }),
            }),
        }
    }
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Specification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "davislo" | "dl" => Ok(Specification::DavisLo),
            "torri" => Ok(Specification::Torri),
            "vasicek" => Ok(Specification::Vasicek),
            "hierdavislo" | "hierdl" => Ok(Specification::HierDavisLo),
            "hiertorri" => Ok(Specification::HierTorri),
            other => Err(Error::Domain(format!("unknown specification '{other}'"))),
        }
    }
}

/// Parameters of either an i.i.d. or a hierarchical specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FittedParams {
    Model(ModelParams),
    Hier(HierParams),
}

impl FittedParams {
    /// Specification these parameters belong to.
    pub fn specification(&self) -> Specification {
        match self {
            FittedParams::Model(m) => match m.family() {
                Family::DavisLo => Specification::DavisLo,
                Family::Torri => Specification::Torri,
                Family::Vasicek => Specification::Vasicek,
            },
            FittedParams::Hier(h) => match h.structural.family() {
                Family::Torri => Specification::HierTorri,
                _ => Specification::HierDavisLo,
            },
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            FittedParams::Model(m) => m.to_vec(),
            FittedParams::Hier(h) => {
                let mut v = vec![h.mu, h.sigma];
                v.extend_from_slice(&h.structural.to_vec()[1..]);
                v
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FittedParams::Model(m) => m.validate(),
            FittedParams::Hier(h) => h.validate(),
        }
    }
}

impl fmt::Display for FittedParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FittedParams::Model(m) => m.fmt(f),
            FittedParams::Hier(h) => h.fmt(f),
        }
    }
}

/// Accepts a preset name, a hierarchical spec (`hier-...`) or a one-period
/// model spec.
impl FromStr for FittedParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(preset) = Preset::from_name(s) {
            return Ok(FittedParams::Model(preset.params()?));
        }
        if s.to_ascii_lowercase().starts_with("hier") {
            return Ok(FittedParams::Hier(s.parse()?));
        }
        Ok(FittedParams::Model(s.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub spec: Specification,
    pub params: FittedParams,
    pub nll: f64,
    pub aic: f64,
    pub converged: bool,
    pub boundary: bool,
    /// Names of the parameters that sit on a bound.
    pub at_bound: Vec<&'static str>,
}

/// Options for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub search: SearchOptions,
    /// Probit-grid level used inside the search; the reported likelihood
    /// is always re-evaluated at converged quadrature.
    pub level: u32,
    /// Seeds polished for the one-period Torri specification, whose
    /// likelihood often has a local optimum on the independence edge.
    pub torri_refine: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            search: SearchOptions {
                simplex: SimplexOptions {
                    max_iter: 4000,
                    f_tol: 1e-10,
                    x_tol: 1e-5,
                    restarts: 1,
                },
                refine: 3,
                snap_tol: 1e-7,
            },
            level: 0,
            torri_refine: 10,
        }
    }
}

/// Counts grouped by pool size with multiplicities.
#[derive(Debug, Clone)]
struct Group {
    n: usize,
    counts: Vec<usize>,
    mult: Vec<f64>,
}

fn group_panel(panel: &Panel) -> Vec<Group> {
    let mut map: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (n, h) in panel.observations() {
        *map.entry(n).or_default().entry(h).or_default() += 1;
    }
    map.into_iter()
        .map(|(n, hs)| Group {
            n,
            counts: hs.keys().copied().collect(),
            mult: hs.values().map(|&c| c as f64).collect(),
        })
        .collect()
}

fn weighted_sum(group: &Group, logs: &[f64]) -> f64 {
    group.mult.iter().zip(logs).map(|(w, v)| w * v).sum()
}

/// Log-likelihood of grouped data at one quadrature level.
fn log_likelihood(params: &FittedParams, groups: &[Group], level: u32) -> f64 {
    match params {
        FittedParams::Model(m) => groups
            .iter()
            .map(|g| weighted_sum(g, &m.log_probs_at(g.n, &g.counts, level)))
            .sum(),
        FittedParams::Hier(hp) => hier_log_likelihood(hp, groups, level),
    }
}

fn hier_log_likelihood(hp: &HierParams, groups: &[Group], level: u32) -> f64 {
    let nodes = ProbitNormal {
        mu: hp.mu,
        sigma: hp.sigma,
    }
    .nodes(level);
    groups
        .iter()
        .map(|g| {
            let logs = match hp.structural {
                ModelParams::DavisLo(dl) => {
                    DavisLoTable::new(dl.q, g.n, &g.counts).mixture_log_probs(&nodes)
                }
                ModelParams::Torri(t) => torri_mixture_log_probs(t.u, t.v, g.n, &g.counts, &nodes),
                ModelParams::Vasicek(_) => vec![f64::NEG_INFINITY; g.counts.len()],
            };
            weighted_sum(g, &logs)
        })
        .sum()
}

fn needs_quadrature(params: &FittedParams) -> bool {
    match params {
        FittedParams::Model(m) => m.family() == Family::Vasicek,
        FittedParams::Hier(h) => h.sigma > 0.0,
    }
}

fn check_panel(panel: &Panel) -> Result<()> {
    if panel.is_empty() {
        return Err(Error::Empty("panel has no years".into()));
    }
    Ok(())
}

/// Exact negative log-likelihood of `panel`.
///
/// Parameters outside their domain, or belonging to another specification,
/// give `+inf`.
pub fn nll(spec: Specification, params: &FittedParams, panel: &Panel, quad: Quadrature) -> Result<f64> {
    check_panel(panel)?;
    if params.specification() != spec || params.validate().is_err() {
        return Ok(f64::INFINITY);
    }
    let groups = group_panel(panel);
    nll_grouped(params, &groups, quad)
}

fn nll_grouped(params: &FittedParams, groups: &[Group], quad: Quadrature) -> Result<f64> {
    let quad = if needs_quadrature(params) {
        quad
    } else {
        Quadrature::Fixed(0)
    };
    let (v, _) = quad.resolve("negative log-likelihood", |level| {
        vec![-log_likelihood(params, groups, level)]
    })?;
    Ok(if v[0].is_nan() { f64::INFINITY } else { v[0] })
}

/// Akaike information criterion `2 nll + 2 k`.
pub fn aic(spec: Specification, nll: f64) -> f64 {
    2.0 * nll + 2.0 * spec.dimension() as f64
}

const P_FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const SIGMA_SEEDS: [f64; 3] = [0.1, 0.3, 0.6];

/// Method-of-moments and grid starting points, in natural coordinates.
fn seeds(spec: Specification, panel: &Panel) -> Vec<Vec<f64>> {
    let n = panel.n_bar().round().max(2.0) as usize;
    let emp = empirical_moments(panel).ok();
    let m = emp
        .map(|s| s.m)
        .unwrap_or(0.0)
        .clamp(0.5 / (n as f64 * panel.len() as f64), 0.999);
    let rho = emp.map(|s| s.rho).unwrap_or(0.0);
    let target = CalibrationTarget { n, m, rho };
    let feasible = rho > 0.0 && target.validate().is_ok();
    let nf = n as f64;
    let mut out: Vec<Vec<f64>> = Vec::new();
    match spec {
        Specification::DavisLo => {
            if feasible {
                if let Ok(d) = calibrate_davis_lo(&target, 1e-6) {
                    out.push(vec![d.p, d.q]);
                }
            }
            for f in P_FRACTIONS {
                for c in [0.0, 0.01, 0.1, 1.0] {
                    out.push(vec![f * m, c / nf]);
                }
            }
        }
        Specification::Torri => {
            if feasible {
                for f in P_FRACTIONS {
                    if let Ok(b) = calibrate_torri_at_p(&target, f * m, 1e-6) {
                        out.push(vec![b.p, b.u, b.v]);
                    }
                }
            }
            for f in P_FRACTIONS {
                // u near 1 with v near 1: a mild outbreak in nearly every year
                for u in [0.5, 0.9, 0.99, 0.998] {
                    for v in [0.01, 0.1, 0.5, 0.95] {
                        out.push(vec![f * m, u, v]);
                    }
                }
            }
        }
        Specification::Vasicek => {
            if feasible {
                if let Ok(v) = calibrate_vasicek(&target, 1e-6) {
                    out.push(vec![v.p, v.rho_a.min(0.99)]);
                }
            }
            for f in [0.7, 1.0, 1.4] {
                for r in [0.0, 0.02, 0.1, 0.3, 0.6] {
                    out.push(vec![(f * m).min(0.999), r]);
                }
            }
        }
        Specification::HierDavisLo => {
            let mut qs: Vec<f64> = [0.0, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|c| c / nf).collect();
            if feasible {
                if let Ok(d) = calibrate_davis_lo(&target, 1e-6) {
                    qs.push(0.5 * d.q);
                }
            }
            for &q in &qs {
                let structural = ModelParams::DavisLo(DavisLo { p: 0.0, q });
                out.extend(hier_seeds(&structural, n, m, &[q]));
            }
        }
        Specification::HierTorri => {
            let mut uv = vec![(0.9, 0.05), (0.9, 0.3), (0.7, 0.3), (0.97, 0.5), (0.5, 0.01), (0.8, 0.8)];
            if feasible {
                if let Ok(b) = calibrate_torri_at_p(&target, 0.5 * m, 1e-6) {
                    uv.push((b.u, b.v));
                }
            }
            for (u, v) in uv {
                let structural = ModelParams::Torri(Torri { p: 0.0, u, v });
                out.extend(hier_seeds(&structural, n, m, &[u, v]));
            }
        }
    }
    out
}

/// Seeds over [`SIGMA_SEEDS`] with `mu` matching the empirical mean rate.
fn hier_seeds(structural: &ModelParams, n: usize, m: f64, tail: &[f64]) -> Vec<Vec<f64>> {
    SIGMA_SEEDS
        .iter()
        .filter_map(|&sigma| {
            let mu = mu_for_mean(structural, n, sigma, m).ok()?;
            let mut v = vec![mu, sigma];
            v.extend_from_slice(tail);
            Some(v)
        })
        .collect()
}

/// Maximum-likelihood fit of `spec` to `panel`.
pub fn fit(spec: Specification, panel: &Panel, opts: &FitOptions) -> Result<FitResult> {
    check_panel(panel)?;
    let groups = group_panel(panel);
    let objective = |x: &[f64]| {
        let params = spec.params_from_vec(x);
        if params.validate().is_err() {
            return f64::INFINITY;
        }
        -log_likelihood(&params, &groups, opts.level)
    };
    let seeds = seeds(spec, panel);
    let mut search = opts.search;
    if spec == Specification::Torri {
        search.refine = opts.torri_refine;
    }
    let out = bounded_search(objective, &spec.bounds(), &seeds, &search)?;
    let params = spec.params_from_vec(&out.x);
    let (nll, quad_ok) = match nll_grouped(&params, &groups, Quadrature::Auto) {
        Ok(v) => (v, true),
        Err(Error::QuadratureNonConvergence(_)) => (
            nll_grouped(&params, &groups, Quadrature::Fixed(crate::numerics::quadrature::MAX_LEVEL))?,
            false,
        ),
        Err(e) => return Err(e),
    };
    let at_bound: Vec<&'static str> = out
        .at_bound
        .iter()
        .zip(spec.parameter_names())
        .filter(|(b, _)| **b)
        .map(|(_, name)| *name)
        .collect();
    Ok(FitResult {
        spec,
        params,
        nll,
        aic: aic(spec, nll),
        converged: out.converged && quad_ok && nll.is_finite(),
        boundary: !at_bound.is_empty(),
        at_bound,
    })
}

/// AIC ranking of competing fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub winner: Specification,
    /// `(spec, aic)` sorted from best to worst.
    pub table: Vec<(Specification, f64)>,
}

/// AIC values closer than this count as tied. Two families that reach the
/// same limiting law (e.g. both at independence) differ only by optimizer noise.
pub const AIC_TIE_TOL: f64 = 1e-6;

/// Smallest AIC wins; ties go to fewer parameters, then to the tag name.
pub fn aic_select(fits: &[FitResult]) -> Result<Selection> {
    if fits.is_empty() {
        return Err(Error::Empty("no fits to compare".into()));
    }
    let mut table: Vec<(Specification, f64)> = fits.iter().map(|f| (f.spec, f.aic)).collect();
    table.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.name().cmp(b.0.name())));
    let best = table[0].1;
    let winner = table
        .iter()
        .filter(|(_, a)| *a <= best + AIC_TIE_TOL)
        .min_by(|a, b| a.0.dimension().cmp(&b.0.dimension()).then(a.0.name().cmp(b.0.name())))
        .map(|(s, _)| *s)
        .expect("non-empty table");
    Ok(Selection { winner, table })
}

/// Model-implied moments aggregated over the panel's pool sizes with the
/// same weights as the empirical moments.
pub fn implied_moments(params: &FittedParams, panel: &Panel) -> Result<MomentSummary> {
    params.validate()?;
    let per_year = panel
        .records()
        .iter()
        .map(|r| {
            let s = match params {
                FittedParams::Model(m) => m.moments(r.n, Quadrature::Auto)?,
                FittedParams::Hier(h) => hier_moments(h, r.n, Quadrature::Auto)?,
            };
            Ok((r.n, s))
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_moments(&per_year)
}

/// Vasicek parameters as a [`FittedParams`].
pub fn vasicek_params(p: f64, rho_a: f64) -> FittedParams {
    FittedParams::Model(ModelParams::Vasicek(Vasicek { p, rho_a }))
}
