//! Value-at-Risk and Expected Shortfall of a count distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::CountDistribution;

/// Slack applied to the CDF when locating the quantile.
pub const CDF_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub alpha: f64,
    pub var: usize,
    pub es: f64,
}

/// `S(h) = P(L >= h)`, accumulated from the upper tail.
pub fn survival(dist: &CountDistribution) -> Vec<f64> {
    let pmf = dist.pmf();
    let mut s = vec![0.0; pmf.len()];
    let mut acc = 0.0;
    for h in (0..pmf.len()).rev() {
        acc += pmf[h];
        s[h] = acc.min(1.0);
    }
    s[0] = 1.0;
    s
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("confidence level {alpha} outside (0,1)")))
    }
}

/// Smallest `h` with `P(L <= h) >= alpha`.
pub fn value_at_risk(dist: &CountDistribution, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    let cdf = dist.cdf();
    Ok(cdf
        .iter()
        .position(|&c| c >= alpha - CDF_SLACK)
        .unwrap_or(dist.n()))
}

/// Conditional tail mean `E[L | L >= VaR_alpha]`.
pub fn expected_shortfall(dist: &CountDistribution, alpha: f64) -> Result<f64> {
    let var = value_at_risk(dist, alpha)?;
    let pmf = dist.pmf();
    let (mut mass, mut first) = (0.0, 0.0);
    for (h, p) in pmf.iter().enumerate().skip(var) {
        mass += p;
        first += h as f64 * p;
    }
    if mass <= 0.0 {
        return Err(Error::Degenerate(format!("no mass at or beyond VaR = {var}")));
    }
    Ok(first / mass)
}

pub fn risk_report(dist: &CountDistribution, alpha: f64) -> Result<RiskReport> {
    Ok(RiskReport {
        alpha,
        var: value_at_risk(dist, alpha)?,
        es: expected_shortfall(dist, alpha)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_examples() {
        assert_eq!(survival(&CountDistribution::point_mass(3, 0)), vec![1.0, 0.0, 0.0, 0.0]);
        let s = survival(&CountDistribution::binomial(2, 0.5));
        assert!((s[1] - 0.75).abs() < 1e-15 && (s[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let d = CountDistribution::point_mass(9, 5);
        assert_eq!(value_at_risk(&d, 0.3).unwrap(), 5);
        assert_eq!(expected_shortfall(&d, 0.99).unwrap(), 5.0);
        let b = CountDistribution::binomial(10, 0.5);
        assert_eq!(value_at_risk(&b, 0.5).unwrap(), 5);
        assert!(value_at_risk(&b, 1.0).is_err());
    }
}
