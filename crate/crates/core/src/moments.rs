//! Mean default rate, joint default probability and default correlation.

use serde::{Deserialize, Serialize};

use crate::data::Panel;
use crate::error::{Error, Result};
use crate::models::{CountDistribution, DavisLo, ModelParams, Torri, Vasicek};
use crate::numerics::{Quadrature, QuadratureRule};

/// First two exchangeable moments of a default indicator vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    /// `P(Z_i = 1)`.
    pub m: f64,
    /// `P(Z_i = 1, Z_j = 1)`, `i != j`.
    pub p11: f64,
    /// Pairwise default correlation; 0 when `m` is 0 or 1.
    pub rho: f64,
    /// Set when `m ∈ {0, 1}` and `rho` is a convention.
    pub degenerate: bool,
}

impl MomentSummary {
    pub fn from_m_p11(m: f64, p11: f64) -> Self {
        let var = m * (1.0 - m);
        if var > 0.0 {
            MomentSummary {
                m,
                p11,
                rho: (p11 - m * m) / var,
                degenerate: false,
            }
        } else {
            MomentSummary {
                m,
                p11,
                rho: 0.0,
                degenerate: true,
            }
        }
    }

    /// `Cov(Z_i, Z_j) = p11 - m²`.
    pub fn covariance(&self) -> f64 {
        self.p11 - self.m * self.m
    }

    /// `Var(L)` in a pool of `n`.
    pub fn count_variance(&self, n: f64) -> f64 {
        n * self.m * (1.0 - self.m) + n * (n - 1.0) * self.covariance()
    }
}

fn need_pair(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::Domain(format!("pairwise moments need n >= 2, got {n}")))
    } else {
        Ok(())
    }
}

/// `1 - (1 - x)^k`, accurate for small `x`.
#[inline]
fn one_minus_pow(x: f64, k: f64) -> f64 {
    -(k * (-x).ln_1p()).exp_m1()
}

pub fn davis_lo_moments(params: &DavisLo, n: usize) -> Result<MomentSummary> {
    need_pair(n)?;
    params.validate()?;
    let DavisLo { p, q } = *params;
    let pq = p * q;
    let nf = n as f64;
    let m = p + (1.0 - p) * one_minus_pow(pq, nf - 1.0);
    // (1-2pq+pq²)^(n-2) - (1-pq)^(2(n-1)) as e^b · expm1(a - b)
    let a = (nf - 2.0) * (-2.0 * pq + pq * q).ln_1p();
    let b = 2.0 * (nf - 1.0) * (-pq).ln_1p();
    let cov = if p == 1.0 {
        0.0
    } else {
        (1.0 - p).powi(2) * b.exp() * (a - b).exp_m1()
    };
    Ok(MomentSummary::from_m_p11(m, cov + m * m))
}

pub fn torri_moments(params: &Torri, n: usize) -> Result<MomentSummary> {
    need_pair(n)?;
    params.validate()?;
    let Torri { p, u, v } = *params;
    let pv = p * v;
    let nf = n as f64;
    let s = (1.0 - p) * (1.0 - u);
    let m = p + s * one_minus_pow(pv, nf - 1.0);
    let pow_n2 = ((nf - 2.0) * (-pv).ln_1p()).exp();
    let p11 = p * p
        + 2.0 * p * s * (1.0 - (1.0 - v) * pow_n2)
        + s * s * one_minus_pow(pv, nf - 2.0);
    Ok(MomentSummary::from_m_p11(m, p11))
}

/// `m = p`, `p11 = E[p(F)²]`; independent of `n`.
pub fn vasicek_moments(params: &Vasicek, quad: Quadrature) -> Result<MomentSummary> {
    params.validate()?;
    let p = params.p;
    if p == 0.0 || p == 1.0 {
        return Ok(MomentSummary::from_m_p11(p, p));
    }
    if params.rho_a == 0.0 {
        return Ok(MomentSummary::from_m_p11(p, p * p));
    }
    let mix = params.mixing_law()?;
    let (v, _) = quad.resolve("vasicek joint default probability", |level| {
        let rule = QuadratureRule::probit_grid(mix.mu, mix.sigma, level);
        vec![rule.expect(|x| {
            let pf = crate::numerics::std_normal_cdf(mix.mu + mix.sigma * x);
            pf * pf
        })]
    })?;
    Ok(MomentSummary::from_m_p11(p, v[0].clamp(p * p, p)))
}

impl ModelParams {
    /// Closed-form moments for a pool of `n`.
    pub fn moments(&self, n: usize, quad: Quadrature) -> Result<MomentSummary> {
        match self {
            ModelParams::DavisLo(m) => davis_lo_moments(m, n),
            ModelParams::Torri(m) => torri_moments(m, n),
            ModelParams::Vasicek(m) => {
                need_pair(n)?;
                vasicek_moments(m, quad)
            }
        }
    }
}

/// Moments implied by an exchangeable count law.
pub fn pmf_moments(dist: &CountDistribution) -> Result<MomentSummary> {
    let n = dist.n();
    need_pair(n)?;
    let nf = n as f64;
    let m = dist.mean() / nf;
    let p11 = dist.second_factorial_moment() / (nf * (nf - 1.0));
    Ok(MomentSummary::from_m_p11(m, p11))
}

/// Obligor-weighted `m` and pair-weighted `p11` across pools of different size.
pub fn aggregate_moments(per_year: &[(usize, MomentSummary)]) -> Result<MomentSummary> {
    if per_year.is_empty() {
        return Err(Error::Empty("no years to aggregate".into()));
    }
    let (mut wn, mut wm, mut wp, mut w11) = (0.0, 0.0, 0.0, 0.0);
    for (n, s) in per_year {
        need_pair(*n)?;
        let nf = *n as f64;
        let pairs = nf * (nf - 1.0);
        wn += nf;
        wm += nf * s.m;
        wp += pairs;
        w11 += pairs * s.p11;
    }
    Ok(MomentSummary::from_m_p11(wm / wn, w11 / wp))
}

/// Empirical `m` and `p11` from annual counts, aggregated like the model
/// moments.
pub fn empirical_moments(panel: &Panel) -> Result<MomentSummary> {
    let per_year: Vec<(usize, MomentSummary)> = panel
        .records()
        .iter()
        .map(|r| {
            let (n, l) = (r.n as f64, r.defaults as f64);
            let p11 = if r.n >= 2 {
                l * (l - 1.0) / (n * (n - 1.0))
            } else {
                0.0
            };
            (r.n, MomentSummary::from_m_p11(l / n, p11))
        })
        .collect();
    aggregate_moments(&per_year)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::YearRecord;
    use crate::models::{davis_lo_pmf, torri_pmf};

    #[test]
    fn independence_cases() {
        let s = davis_lo_moments(&DavisLo { p: 0.3, q: 0.0 }, 10).unwrap();
        assert!((s.m - 0.3).abs() < 1e-15 && s.rho.abs() < 1e-15);
        let s = davis_lo_moments(&DavisLo { p: 0.0, q: 0.5 }, 10).unwrap();
        assert!(s.m == 0.0 && s.rho == 0.0 && s.degenerate);
        for t in [Torri { p: 0.2, u: 0.3, v: 0.0 }, Torri { p: 0.2, u: 1.0, v: 0.7 }] {
            let s = torri_moments(&t, 50).unwrap();
            assert!((s.m - 0.2).abs() < 1e-15 && s.rho.abs() < 1e-14);
        }
        let s = vasicek_moments(&Vasicek { p: 0.1, rho_a: 0.0 }, Quadrature::Auto).unwrap();
        assert!((s.p11 - 0.01).abs() < 1e-16 && s.rho == 0.0);
        assert!(davis_lo_moments(&DavisLo { p: 0.1, q: 0.1 }, 1).is_err());
    }

    #[test]
    fn comonotone_limit() {
        let s = vasicek_moments(
            &Vasicek {
                p: 0.5,
                rho_a: 0.999_999,
            },
            Quadrature::Auto,
        )
        .unwrap();
        assert!((s.p11 - 0.5).abs() < 1e-3 && (s.rho - 1.0).abs() < 1e-3);
    }

    #[test]
    fn closed_forms_match_pmf() {
        let dl = DavisLo { p: 0.001246, q: 0.07648 };
        let a = davis_lo_moments(&dl, 200).unwrap();
        let b = pmf_moments(&davis_lo_pmf(&dl, 200)).unwrap();
        assert!((a.m - b.m).abs() < 1e-10 && (a.p11 - b.p11).abs() < 1e-10);
        let t = Torri { p: 0.009436, u: 0.8485, v: 0.03886 };
        let a = torri_moments(&t, 200).unwrap();
        let b = pmf_moments(&torri_pmf(&t, 200)).unwrap();
        assert!((a.m - b.m).abs() < 1e-10 && (a.p11 - b.p11).abs() < 1e-10);
    }

    #[test]
    fn binomial_pmf_moments() {
        let s = pmf_moments(&CountDistribution::binomial(10, 0.3)).unwrap();
        assert!((s.m - 0.3).abs() < 1e-12 && (s.p11 - 0.09).abs() < 1e-12 && s.rho.abs() < 1e-12);
        let s = pmf_moments(&CountDistribution::point_mass(10, 10)).unwrap();
        assert!(s.m == 1.0 && s.rho == 0.0 && s.degenerate);
    }

    #[test]
    fn aggregation_weights() {
        let a = MomentSummary::from_m_p11(0.01, 0.0002);
        let b = MomentSummary::from_m_p11(0.03, 0.0012);
        let s = aggregate_moments(&[(100, a), (300, b)]).unwrap();
        assert!((s.m - 0.025).abs() < 1e-15);
        let w = (100.0 * 99.0 * 0.0002 + 300.0 * 299.0 * 0.0012) / (100.0 * 99.0 + 300.0 * 299.0);
        assert!((s.p11 - w).abs() < 1e-16);
        assert_eq!(aggregate_moments(&[(50, a)]).unwrap(), a);
        assert!(aggregate_moments(&[]).is_err());
    }

    #[test]
    fn empirical_single_year() {
        let panel = Panel::new(
            "ALL",
            vec![YearRecord {
                year: 2000,
                n: 100,
                defaults: 2,
                class: "ALL".into(),
            }],
        )
        .unwrap();
        let s = empirical_moments(&panel).unwrap();
        assert!((s.m - 0.02).abs() < 1e-15);
        assert!((s.p11 - 2.0 / (100.0 * 99.0)).abs() < 1e-18);
    }
}
