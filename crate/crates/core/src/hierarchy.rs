//! Probit-normal environments for the contagion models.
//!
//! The yearly baseline rate is `p_t = Φ(y_t)` with `y_t ~ N(mu, sigma²)`;
//! given `p_t` the count follows the structural contagion model. Mixture
//! integrals use the probit grid of [`crate::numerics::QuadratureRule`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    davis_lo_pmf, parse_fields, DavisLo, Torri, probit_mixture_pmf, torri_pmf, CountDistribution, Family, ModelParams,
    ProbitNormal,
};
use crate::moments::MomentSummary;
use crate::numerics::{find_root, std_normal_cdf, std_normal_quantile, Quadrature, QuadratureRule};

/// Environmental law plus structural contagion parameters. The baseline
/// `p` stored inside `structural` is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierParams {
    pub mu: f64,
    pub sigma: f64,
    pub structural: ModelParams,
}

impl HierParams {
    pub fn new(mu: f64, sigma: f64, structural: ModelParams) -> Result<Self> {
        let hp = HierParams {
            mu,
            sigma,
            structural,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::Domain(format!("mu = {} is not finite", self.mu)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {} must be >= 0", self.sigma)));
        }
        if self.structural.family() == Family::Vasicek {
            return Err(Error::Domain("hierarchical structure must be Davis-Lo or Torri".into()));
        }
        self.structural.with_p(0.5).validate()
    }

    pub fn mixing_law(&self) -> ProbitNormal {
        ProbitNormal {
            mu: self.mu,
            sigma: self.sigma,
        }
    }

    /// Structural model at baseline rate `p`.
    pub fn at(&self, p: f64) -> ModelParams {
        self.structural.with_p(p)
    }
}

impl std::fmt::Display for HierParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.structural {
            ModelParams::DavisLo(m) => {
                write!(f, "hier-davislo:mu={},sigma={},q={}", self.mu, self.sigma, m.q)
            }
            ModelParams::Torri(m) => write!(
                f,
                "hier-torri:mu={},sigma={},u={},v={}",
                self.mu, self.sigma, m.u, m.v
            ),
            ModelParams::Vasicek(_) => write!(f, "hier-invalid"),
        }
    }
}

/// Parses `hier-davislo:mu=..,sigma=..,q=..` or
/// `hier-torri:mu=..,sigma=..,u=..,v=..`.
impl std::str::FromStr for HierParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Domain(format!("hierarchical spec '{s}' lacks ':'")))?;
        let fields = parse_fields(rest)?;
        let get = |k: &str| -> Result<f64> {
            fields
                .iter()
                .find(|(name, _)| name == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Domain(format!("hierarchical spec '{s}' lacks {k}")))
        };
        let structural = match head.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "hierdavislo" | "hierdl" => ModelParams::DavisLo(DavisLo { p: 0.0, q: get("q")? }),
            "hiertorri" => ModelParams::Torri(Torri {
                p: 0.0,
                u: get("u")?,
                v: get("v")?,
            }),
            other => return Err(Error::Domain(format!("unknown hierarchical model '{other}'"))),
        };
        HierParams::new(get("mu")?, get("sigma")?, structural)
    }
}

/// Closed-form one-period moments at baseline `p`.
fn conditional_moments(hp: &HierParams, p: f64, n: usize) -> MomentSummary {
    hp.at(p)
        .moments(n, Quadrature::Auto)
        .expect("structural moments at a valid probability")
}

/// `E[g(p_t)]` for a vector-valued `g`, resolved under `quad`.
fn expect_over_environment<G>(hp: &HierParams, quad: Quadrature, what: &str, g: G) -> Result<Vec<f64>>
where
    G: Fn(f64) -> Vec<f64>,
{
    if hp.sigma == 0.0 {
        return Ok(g(std_normal_cdf(hp.mu)));
    }
    let (v, _) = quad.resolve(what, |level| {
        let rule = QuadratureRule::probit_grid(hp.mu, hp.sigma, level);
        let mut acc: Vec<f64> = Vec::new();
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let vals = g(std_normal_cdf(hp.mu + hp.sigma * x));
            if acc.is_empty() {
                acc = vec![0.0; vals.len()];
            }
            for (a, v) in acc.iter_mut().zip(vals) {
                *a += w * v;
            }
        }
        acc
    })?;
    Ok(v)
}

/// Unconditional count law on `{0..n}`.
pub fn hier_pmf(hp: &HierParams, n: usize, quad: Quadrature) -> Result<CountDistribution> {
    hp.validate()?;
    probit_mixture_pmf(&hp.mixing_law(), n, quad, |pt| match hp.at(pt.p) {
        ModelParams::DavisLo(m) => davis_lo_pmf(&m, n).log_pmf().to_vec(),
        ModelParams::Torri(m) => torri_pmf(&m, n).log_pmf().to_vec(),
        ModelParams::Vasicek(_) => unreachable!("validated"),
    })
}

/// Pieces of the law of total variance for a pool of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceParts {
    /// `E[m(p_t)]`.
    pub mean_rate: f64,
    /// `E[n m (1 - m)]`.
    pub binomial: f64,
    /// `E[n (n-1) (p11 - m²)]`.
    pub contagion: f64,
    /// `Var(n m(p_t))`.
    pub environment: f64,
}

impl VarianceParts {
    pub fn total(&self) -> f64 {
        self.binomial + self.contagion + self.environment
    }
}

pub fn variance_parts(hp: &HierParams, n: usize, quad: Quadrature) -> Result<VarianceParts> {
    hp.validate()?;
    let nf = n as f64;
    let v = expect_over_environment(hp, quad, "variance decomposition", |p| {
        let s = conditional_moments(hp, p, n.max(2));
        let mean = nf * s.m;
        vec![
            s.m,
            mean * mean,
            nf * s.m * (1.0 - s.m),
            nf * (nf - 1.0) * s.covariance(),
        ]
    })?;
    let mean = nf * v[0];
    Ok(VarianceParts {
        mean_rate: v[0],
        binomial: v[2],
        contagion: v[3],
        environment: (v[1] - mean * mean).max(0.0),
    })
}

/// Share of `Var(L)` explained by the environment, `Var(E[L|p]) / Var(L)`.
pub fn variance_ratio(hp: &HierParams, n: usize, quad: Quadrature) -> Result<f64> {
    if hp.sigma == 0.0 {
        hp.validate()?;
        return Ok(0.0);
    }
    let parts = variance_parts(hp, n, quad)?;
    let total = parts.total();
    if !(total > 0.0) {
        return Err(Error::Degenerate("count variance is zero".into()));
    }
    Ok((parts.environment / total).clamp(0.0, 1.0))
}

/// Unconditional mean rate `E[m(p_t)]`.
pub fn mean_rate(hp: &HierParams, n: usize, quad: Quadrature) -> Result<f64> {
    let v = expect_over_environment(hp, quad, "mean rate", |p| vec![conditional_moments(hp, p, n.max(2)).m])?;
    Ok(v[0])
}

/// Unconditional `(m, p11)` in a pool of `n`, averaged over the environment.
pub fn hier_moments(hp: &HierParams, n: usize, quad: Quadrature) -> Result<MomentSummary> {
    hp.validate()?;
    let v = expect_over_environment(hp, quad, "moments", |p| {
        let s = conditional_moments(hp, p, n.max(2));
        vec![s.m, s.p11]
    })?;
    Ok(MomentSummary::from_m_p11(v[0], v[1]))
}

const MU_RANGE: f64 = 12.0;
const SIGMA_MAX: f64 = 64.0;

/// `mu` giving unconditional mean rate `base_m` at spread `sigma`.
pub(crate) fn mu_for_mean(structural: &ModelParams, n: usize, sigma: f64, base_m: f64) -> Result<f64> {
    let gap = |mu: f64| {
        let hp = HierParams {
            mu,
            sigma,
            structural: *structural,
        };
        mean_rate(&hp, n, Quadrature::Auto).map_or(f64::NAN, |m| m - base_m)
    };
    find_root(gap, -MU_RANGE, MU_RANGE, 1e-13)
}

/// Finds `(mu, sigma)` with variance ratio `target_r` while the mean rate
/// stays at `base_m`.
pub fn solve_sigma_for_r(
    structural: &ModelParams,
    n: usize,
    target_r: f64,
    base_m: f64,
) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&target_r) {
        return Err(Error::UnreachableRatio {
            target: target_r,
            sup: 1.0,
        });
    }
    if !(base_m > 0.0 && base_m < 1.0) {
        return Err(Error::Domain(format!("base mean {base_m} outside (0,1)")));
    }
    HierParams {
        mu: 0.0,
        sigma: 0.0,
        structural: *structural,
    }
    .validate()?;
    if target_r == 0.0 {
        let p = baseline_for_mean(structural, n, base_m)?;
        return Ok((std_normal_quantile(p)?, 0.0));
    }
    let ratio_at = |sigma: f64| -> Result<(f64, f64)> {
        let mu = mu_for_mean(structural, n, sigma, base_m)?;
        let hp = HierParams {
            mu,
            sigma,
            structural: *structural,
        };
        Ok((mu, variance_ratio(&hp, n, Quadrature::Auto)?))
    };
    let mut hi = 0.5;
    loop {
        let (_, r) = ratio_at(hi)?;
        if r >= target_r {
            break;
        }
        if hi >= SIGMA_MAX {
            return Err(Error::UnreachableRatio { target: target_r, sup: r });
        }
        hi *= 2.0;
    }
    let sigma = find_root(
        |s| ratio_at(s).map_or(f64::NAN, |(_, r)| r - target_r),
        0.0,
        hi,
        1e-12,
    )?;
    let (mu, r) = ratio_at(sigma)?;
    if (r - target_r).abs() > 1e-6 {
        return Err(Error::Optimization(format!(
            "variance ratio {r} at sigma = {sigma} misses target {target_r}"
        )));
    }
    Ok((mu, sigma))
}

/// Baseline rate whose one-period mean is `base_m`; contagion only adds
/// defaults, so it lies in `[0, base_m]`.
pub fn baseline_for_mean(structural: &ModelParams, n: usize, base_m: f64) -> Result<f64> {
    let gap = |p: f64| {
        structural
            .with_p(p)
            .moments(n, Quadrature::Auto)
            .map_or(f64::NAN, |s| s.m - base_m)
    };
    find_root(gap, 0.0, base_m, 1e-16)
}

/// Variance contributions normalized by an empirical variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub r_iid: f64,
    pub r_infect: f64,
    pub r_pt: f64,
    pub normalizer: f64,
    /// Model variance `Var(L)` at the representative pool size.
    pub model_variance: f64,
}

pub fn variance_decomposition(
    hp: &HierParams,
    n_bar: usize,
    empirical_variance: f64,
    quad: Quadrature,
) -> Result<DecompositionReport> {
    if !(empirical_variance > 0.0) {
        return Err(Error::Degenerate(format!(
            "empirical variance {empirical_variance} must be positive"
        )));
    }
    if n_bar < 2 {
        return Err(Error::Domain(format!("representative pool size {n_bar} < 2")));
    }
    let parts = variance_parts(hp, n_bar, quad)?;
    Ok(DecompositionReport {
        r_iid: parts.binomial / empirical_variance,
        r_infect: parts.contagion / empirical_variance,
        r_pt: parts.environment / empirical_variance,
        normalizer: empirical_variance,
        model_variance: parts.total(),
    })
}

/// `n̄(n̄-1)(p11 - m²) / V̂` for a non-hierarchical specification.
pub fn iid_dependence_ratio(moments: &MomentSummary, n_bar: usize, empirical_variance: f64) -> Result<f64> {
    if !(empirical_variance > 0.0) {
        return Err(Error::Degenerate(format!(
            "empirical variance {empirical_variance} must be positive"
        )));
    }
    let nf = n_bar as f64;
    Ok(nf * (nf - 1.0) * moments.covariance() / empirical_variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DavisLo, Torri};

    fn dl(q: f64) -> ModelParams {
        ModelParams::DavisLo(DavisLo { p: 0.0, q })
    }

    #[test]
    fn degenerate_environment() {
        let hp = HierParams::new(-2.0, 0.0, dl(0.03)).unwrap();
        let a = hier_pmf(&hp, 40, Quadrature::Auto).unwrap();
        let b = davis_lo_pmf(&DavisLo { p: std_normal_cdf(-2.0), q: 0.03 }, 40);
        assert!(a.max_abs_diff(&b) < 1e-10);
        assert_eq!(variance_ratio(&hp, 40, Quadrature::Auto).unwrap(), 0.0);
    }

    #[test]
    fn total_variance_identity() {
        for hp in [
            HierParams::new(-2.2, 0.4, dl(0.02)).unwrap(),
            HierParams::new(-1.8, 0.8, ModelParams::Torri(Torri { p: 0.0, u: 0.7, v: 0.1 })).unwrap(),
        ] {
            let d = hier_pmf(&hp, 60, Quadrature::Auto).unwrap();
            let parts = variance_parts(&hp, 60, Quadrature::Auto).unwrap();
            assert!((parts.total() / d.variance() - 1.0).abs() < 1e-6);
            assert!((parts.mean_rate * 60.0 - d.mean()).abs() < 1e-8);
        }
    }

    #[test]
    fn sigma_inversion_round_trip() {
        let s = dl(0.05);
        let (mu, sigma) = solve_sigma_for_r(&s, 100, 0.4, 0.02).unwrap();
        let hp = HierParams::new(mu, sigma, s).unwrap();
        assert!((variance_ratio(&hp, 100, Quadrature::Auto).unwrap() - 0.4).abs() < 1e-6);
        assert!((mean_rate(&hp, 100, Quadrature::Auto).unwrap() - 0.02).abs() < 1e-8);
        let (_, s0) = solve_sigma_for_r(&s, 100, 0.0, 0.02).unwrap();
        assert_eq!(s0, 0.0);
        assert!(solve_sigma_for_r(&s, 100, 1.0, 0.02).is_err());
    }

    #[test]
    fn pure_binomial_decomposition() {
        let hp = HierParams::new(-2.0, 0.0, dl(0.0)).unwrap();
        let r = variance_decomposition(&hp, 100, 5.0, Quadrature::Auto).unwrap();
        let m = std_normal_cdf(-2.0);
        assert!(r.r_pt == 0.0 && r.r_infect.abs() < 1e-15);
        assert!((r.r_iid - 100.0 * m * (1.0 - m) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn dependence_ratio_linear() {
        let a = MomentSummary::from_m_p11(0.02, 0.0004 + 0.001);
        let b = MomentSummary::from_m_p11(0.02, 0.0004 + 0.002);
        let ra = iid_dependence_ratio(&a, 100, 4.0).unwrap();
        let rb = iid_dependence_ratio(&b, 100, 4.0).unwrap();
        assert!((rb - 2.0 * ra).abs() < 1e-12);
        let z = MomentSummary::from_m_p11(0.02, 0.0004);
        assert!(iid_dependence_ratio(&z, 100, 4.0).unwrap().abs() < 1e-15);
    }
}
