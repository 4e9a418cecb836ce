use super::mixture::{probit_mixture_log_probs_at, probit_mixture_pmf, ProbitNormal};
use super::{CountDistribution, Vasicek};
use crate::error::{Error, Result};
use crate::numerics::special::{binomial_log_pmf_vec, ln_binom_pmf, std_normal_cdf};
use crate::numerics::{std_normal_quantile, Quadrature};

/// Conditional default rate given the systematic factor `f`.
pub fn conditional_vasicek_rate(p: f64, rho_a: f64, f: f64) -> Result<f64> {
    Vasicek { p, rho_a }.validate()?;
    if p == 0.0 || p == 1.0 || rho_a == 0.0 {
        return Ok(p);
    }
    let c = std_normal_quantile(p)?;
    Ok(std_normal_cdf((c - rho_a.sqrt() * f) / (1.0 - rho_a).sqrt()))
}

impl Vasicek {
    /// Equivalent probit-normal mixing law of the conditional rate.
    pub fn mixing_law(&self) -> Result<ProbitNormal> {
        self.validate()?;
        if self.p == 0.0 || self.p == 1.0 {
            return Err(Error::Degenerate(format!(
                "vasicek p = {} has no probit representation",
                self.p
            )));
        }
        let s = (1.0 - self.rho_a).sqrt();
        Ok(ProbitNormal {
            mu: std_normal_quantile(self.p)? / s,
            sigma: (self.rho_a / (1.0 - self.rho_a)).sqrt(),
        })
    }
}

/// Binomial mixed over the Gaussian one-factor conditional rate.
pub fn vasicek_pmf(params: &Vasicek, n: usize, quad: Quadrature) -> Result<CountDistribution> {
    params.validate()?;
    if params.p == 0.0 {
        return Ok(CountDistribution::point_mass(n, 0));
    }
    if params.p == 1.0 {
        return Ok(CountDistribution::point_mass(n, n));
    }
    if params.rho_a == 0.0 {
        return Ok(CountDistribution::binomial(n, params.p));
    }
    let mix = params.mixing_law()?;
    probit_mixture_pmf(&mix, n, quad, |pt| binomial_log_pmf_vec(n, pt.ln_p, pt.ln_1mp))
}

/// `ln P(L = h)` at the requested counts, on a fixed grid level.
pub fn vasicek_log_probs_at(params: &Vasicek, n: usize, counts: &[usize], level: u32) -> Vec<f64> {
    let exact = |d: CountDistribution| {
        counts
            .iter()
            .map(|&h| d.log_pmf().get(h).copied().unwrap_or(f64::NEG_INFINITY))
            .collect()
    };
    if params.p == 0.0 {
        return exact(CountDistribution::point_mass(n, 0));
    }
    if params.p == 1.0 {
        return exact(CountDistribution::point_mass(n, n));
    }
    let mix = match params.mixing_law() {
        Ok(m) => m,
        Err(_) => return vec![f64::NAN; counts.len()],
    };
    let items: Vec<(usize, usize)> = counts.iter().map(|&h| (n, h)).collect();
    probit_mixture_log_probs_at(&mix, level, &items, |pt, n, h| {
        ln_binom_pmf(h, n, pt.ln_p, pt.ln_1mp)
    })
}
