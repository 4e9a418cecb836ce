//! Special functions and log-space combinatorics.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use crate::error::{Error, Result};

const LN_FACTORIAL_TABLE: usize = 1 << 15;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..LN_FACTORIAL_TABLE)
            .map(|k| libm::lgamma(k as f64 + 1.0))
            .collect()
    })
}

/// `ln(k!)`.
#[inline]
pub fn ln_factorial(k: usize) -> f64 {
    match ln_factorial_table().get(k) {
        Some(v) => *v,
        None => libm::lgamma(k as f64 + 1.0),
    }
}

/// `ln C(n, k)`; `-inf` when `k > n`.
#[inline]
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Binomial log-pmf from precomputed `ln p` and `ln(1-p)`.
///
/// Uses the convention `0 * ln 0 = 0`, so the endpoints `p = 0` and `p = 1`
/// (passed as `-inf` logs) give exact point masses.
#[inline]
pub fn ln_binom_pmf(k: usize, n: usize, ln_p: f64, ln_q: f64) -> f64 {
    debug_assert!(k <= n);
    let mut v = ln_choose(n, k);
    if k > 0 {
        v += k as f64 * ln_p;
    }
    if n > k {
        v += (n - k) as f64 * ln_q;
    }
    v
}

/// `ln Binom(n, p; k)`; returns `-inf` for impossible events.
pub fn log_binomial_pmf(k: usize, n: usize, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain(format!("count {k} exceeds pool size {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0,1]")));
    }
    Ok(ln_binom_pmf(k, n, p.ln(), (-p).ln_1p()))
}

/// Full binomial log-pmf vector on `{0..n}`.
pub fn binomial_log_pmf_vec(n: usize, ln_p: f64, ln_q: f64) -> Vec<f64> {
    (0..=n).map(|k| ln_binom_pmf(k, n, ln_p, ln_q)).collect()
}

/// `ln Σ exp(x_i)`, returning `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Streaming `ln Σ exp(x_i)` accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumAcc {
    max: f64,
    sum: f64,
}

impl Default for LogSumAcc {
    fn default() -> Self {
        LogSumAcc {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumAcc {
    #[inline]
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF `Φ(x)`.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln Φ(x)`, accurate in the lower tail.
#[inline]
pub fn ln_std_normal_cdf(x: f64) -> f64 {
    if x > 5.0 {
        // Φ(x) = 1 - Φ(-x); log1p keeps the small complement
        (-std_normal_cdf(-x)).ln_1p()
    } else {
        std_normal_cdf(x).ln()
    }
}

/// Inverse standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley step against
/// [`std_normal_cdf`].
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("quantile level {u} outside (0,1)")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (-u).ln_1p()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement; the residual is taken on the smaller tail.
    let e = if x <= 0.0 {
        std_normal_cdf(x) - u
    } else {
        (1.0 - u) - std_normal_cdf(-x)
    };
    let t = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - t / (1.0 + 0.5 * x * t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_examples() {
        assert_eq!(log_binomial_pmf(0, 5, 0.0).unwrap(), 0.0);
        assert_eq!(log_binomial_pmf(3, 5, 1.0).unwrap(), f64::NEG_INFINITY);
        let v = log_binomial_pmf(2, 4, 0.5).unwrap();
        assert!((v - (6.0f64 / 16.0).ln()).abs() < 1e-14);
        assert_eq!(log_binomial_pmf(5, 5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn binomial_domain_errors() {
        assert!(log_binomial_pmf(6, 5, 0.5).is_err());
        assert!(log_binomial_pmf(1, 5, 1.5).is_err());
        assert!(log_binomial_pmf(1, 5, -0.1).is_err());
    }

    #[test]
    fn ln_factorial_matches_product() {
        let mut acc = 0.0f64;
        for k in 1..=30usize {
            acc += (k as f64).ln();
            assert!((ln_factorial(k) - acc).abs() < 1e-12);
        }
        let big = LN_FACTORIAL_TABLE + 10;
        assert!((ln_factorial(big) - libm::lgamma(big as f64 + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn normal_cdf_examples() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_eq!(std_normal_cdf(40.0), 1.0);
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((std_normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!((std_normal_quantile(0.841_344_746_068_542_9).unwrap() - 1.0).abs() < 1e-8);
        // reference value from bisection on the CDF
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < 0.02 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = std_normal_quantile(0.02).unwrap();
        assert!((x - lo).abs() < 1e-10);
        assert!((x + 2.0537).abs() < 1e-4);
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
    }

    #[test]
    fn log_sum_exp_edge_cases() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(0.0, f64::NEG_INFINITY)).abs() < 1e-15);
    }

    #[test]
    fn streaming_accumulator_matches_batch() {
        let xs = [-3.0, 10.0, -700.0, 2.5, f64::NEG_INFINITY, 9.99];
        let mut acc = LogSumAcc::default();
        for x in xs {
            acc.add(x);
        }
        assert!((acc.value() - log_sum_exp(&xs)).abs() < 1e-13);
        assert_eq!(LogSumAcc::default().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn ln_cdf_upper_tail() {
        let v = ln_std_normal_cdf(9.0);
        assert!(v < 0.0 && v > -1e-18);
        assert!((ln_std_normal_cdf(-1.0) - std_normal_cdf(-1.0).ln()).abs() < 1e-15);
    }
}
