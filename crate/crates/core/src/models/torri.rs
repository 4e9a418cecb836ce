use serde::{Deserialize, Serialize};

use super::mixture::{ProbitPoint, LINEAR_FLOOR};
use super::{ln_pair, pow_ln, CountDistribution, Torri};
use crate::numerics::special::{ln_choose, ln_binom_pmf, log_add_exp, LogSumAcc};

/// Probability that the contagion channel is switched on in a pool of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContagionState {
    pub n: usize,
    /// Per-obligor probability of being an active infector, `p v`.
    pub infector_rate: f64,
    /// `P(at least one active infector) = 1 - (1 - p v)^n`.
    pub pi_n: f64,
}

pub fn activation_probability(params: &Torri, n: usize) -> ContagionState {
    let pv = params.p * params.v;
    ContagionState {
        n,
        infector_rate: pv,
        pi_n: -(n as f64 * (-pv).ln_1p()).exp_m1(),
    }
}

/// Mixture over the number of active infectors `H ~ Binomial(n, p v)`:
/// with no infector every obligor defaults idiosyncratically only; with
/// `H = h >= 1` the remaining `n - h` default unless immune and not
/// idiosyncratically defaulting.
pub fn torri_pmf(params: &Torri, n: usize) -> CountDistribution {
    let Torri { p, u, v } = *params;
    let pv = p * v;
    if pv == 1.0 {
        return CountDistribution::point_mass(n, n);
    }
    let (ln_pv, ln_1mpv) = ln_pair(pv);
    let ln_1mp = (-p).ln_1p();
    let ln_a1 = p.ln() + (-v).ln_1p() - ln_1mpv;
    let ln_1ma1 = ln_1mp - ln_1mpv;
    let ln_b1 = (p * (1.0 - v) + (1.0 - p) * (1.0 - u)).ln() - ln_1mpv;
    let ln_1mb1 = ln_1mp + u.ln() - ln_1mpv;

    let mut acc = vec![LogSumAcc::default(); n + 1];
    let w0 = pow_ln(n, ln_1mpv);
    for (l, slot) in acc.iter_mut().enumerate() {
        slot.add(w0 + ln_binom_pmf(l, n, ln_a1, ln_1ma1));
    }
    for h in 1..=n {
        let w = ln_binom_pmf(h, n, ln_pv, ln_1mpv);
        if w == f64::NEG_INFINITY {
            continue;
        }
        for (j, slot) in acc[h..].iter_mut().enumerate() {
            slot.add(w + ln_binom_pmf(j, n - h, ln_b1, ln_1mb1));
        }
    }
    CountDistribution::from_normalized(acc.iter().map(LogSumAcc::value).collect())
}

/// Precomputed logs for the closed-form probability
/// `C(n,h) [a^h (1-p)^(n-h) + (p+b)^h c^(n-h) - (a+b)^h c^(n-h)]`,
/// `a = p(1-v)`, `b = (1-p)(1-u)`, `c = (1-p)u`.
struct ClosedForm {
    ln_a: f64,
    ln_1mp: f64,
    ln_pb: f64,
    ln_c: f64,
    /// `ln(1 - p v / (p + b))`, the log-ratio of `a + b` to `p + b`.
    ln_ratio: f64,
    active: bool,
}

impl ClosedForm {
    fn new(params: &Torri) -> Self {
        let Torri { p, u, v } = *params;
        let b = (1.0 - p) * (1.0 - u);
        let pb = p + b;
        let pv = p * v;
        ClosedForm {
            ln_a: (p * (1.0 - v)).ln(),
            ln_1mp: (-p).ln_1p(),
            ln_pb: pb.ln(),
            ln_c: ((1.0 - p) * u).ln(),
            ln_ratio: if pv > 0.0 { (-pv / pb).ln_1p() } else { 0.0 },
            active: pv > 0.0,
        }
    }

    fn ln_prob(&self, n: usize, h: usize) -> f64 {
        if h > n {
            return f64::NEG_INFINITY;
        }
        let quiet = pow_ln(h, self.ln_a) + pow_ln(n - h, self.ln_1mp);
        let outbreak = if self.active && h > 0 {
            pow_ln(h, self.ln_pb)
                + pow_ln(n - h, self.ln_c)
                + (-(h as f64 * self.ln_ratio).exp_m1()).ln()
        } else {
            f64::NEG_INFINITY
        };
        ln_choose(n, h) + log_add_exp(quiet, outbreak)
    }
}

/// Same law as [`torri_pmf`] from the closed-form probability generating
/// function; each entry is `O(1)`.
pub fn torri_pmf_mgf(params: &Torri, n: usize) -> CountDistribution {
    let cf = ClosedForm::new(params);
    CountDistribution::from_normalized((0..=n).map(|h| cf.ln_prob(n, h)).collect())
}

/// `ln P(L = h)` at the requested counts via the closed form.
pub fn torri_log_probs_at(params: &Torri, n: usize, counts: &[usize]) -> Vec<f64> {
    let cf = ClosedForm::new(params);
    counts.iter().map(|&h| cf.ln_prob(n, h)).collect()
}

/// `ln P(L = h)` at `counts` when `p` is drawn from `nodes`
/// (`(ln weight, point)`) and `u`, `v` are fixed.
pub fn torri_mixture_log_probs(
    u: f64,
    v: f64,
    n: usize,
    counts: &[usize],
    nodes: &[(f64, ProbitPoint)],
) -> Vec<f64> {
    let forms: Vec<(f64, ClosedForm)> = nodes
        .iter()
        .map(|(ln_w, pt)| (*ln_w, ClosedForm::new(&Torri { p: pt.p, u, v })))
        .collect();
    counts
        .iter()
        .map(|&h| {
            if h > n {
                return f64::NEG_INFINITY;
            }
            let lc = ln_choose(n, h);
            let mut sum = 0.0;
            for (ln_w, cf) in &forms {
                let base = ln_w + lc;
                sum += (base + pow_ln(h, cf.ln_a) + pow_ln(n - h, cf.ln_1mp)).exp();
                if cf.active && h > 0 {
                    let outbreak = base + pow_ln(h, cf.ln_pb) + pow_ln(n - h, cf.ln_c);
                    sum += outbreak.exp() * -(h as f64 * cf.ln_ratio).exp_m1();
                }
            }
            if sum > LINEAR_FLOOR {
                sum.ln()
            } else {
                let mut acc = LogSumAcc::default();
                for (ln_w, cf) in &forms {
                    acc.add(ln_w + cf.ln_prob(n, h));
                }
                acc.value()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routes_agree() {
        for m in [
            Torri { p: 0.003109, u: 0.8986, v: 0.2955 },
            Torri { p: 0.3, u: 0.0, v: 1.0 },
            Torri { p: 0.05, u: 1.0, v: 0.5 },
            Torri { p: 0.2, u: 0.4, v: 0.0 },
        ] {
            let a = torri_pmf(&m, 60);
            let b = torri_pmf_mgf(&m, 60);
            assert!(a.max_abs_diff(&b) < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn no_infectivity_is_binomial() {
        let d = torri_pmf(&Torri { p: 0.1, u: 0.3, v: 0.0 }, 20);
        assert!(d.max_abs_diff(&CountDistribution::binomial(20, 0.1)) < 1e-14);
    }

    #[test]
    fn full_immunity_is_binomial() {
        let d = torri_pmf(&Torri { p: 0.1, u: 1.0, v: 0.6 }, 20);
        assert!(d.max_abs_diff(&CountDistribution::binomial(20, 0.1)) < 1e-14);
    }

    #[test]
    fn certain_infection() {
        let d = torri_pmf(&Torri { p: 1.0, u: 0.5, v: 1.0 }, 9);
        assert_eq!(d.prob(9), 1.0);
    }

    #[test]
    fn two_obligor_enumeration() {
        // L = 2 iff both default idiosyncratically, or one is an active
        // infector and the other is either idiosyncratic or non-immune.
        let (p, u, v) = (0.3, 0.6, 0.5);
        let d = torri_pmf(&Torri { p, u, v }, 2);
        let both_idio = p * p;
        let one_infects = 2.0 * p * v * (1.0 - p) * (1.0 - u);
        assert!((d.prob(2) - (both_idio + one_infects)).abs() < 1e-14);
        assert!((d.prob(0) - (1.0 - p) * (1.0 - p)).abs() < 1e-14);
    }

    #[test]
    fn mixture_matches_weighted_pmfs() {
        let nodes: Vec<(f64, ProbitPoint)> = [(-2.0, 0.6), (-0.5, 0.4)]
            .iter()
            .map(|&(z, w): &(f64, f64)| (w.ln(), ProbitPoint::from_probit(z)))
            .collect();
        let hs = [0usize, 1, 7, 30];
        let got = torri_mixture_log_probs(0.7, 0.2, 30, &hs, &nodes);
        for (j, &h) in hs.iter().enumerate() {
            let want: f64 = nodes
                .iter()
                .map(|(ln_w, pt)| ln_w.exp() * torri_pmf(&Torri { p: pt.p, u: 0.7, v: 0.2 }, 30).prob(h))
                .sum();
            assert!((got[j] - want.ln()).abs() < 1e-12, "h={h}");
        }
    }

    #[test]
    fn activation_examples() {
        let s = activation_probability(&Torri { p: 0.003109, u: 0.8986, v: 0.2955 }, 200);
        assert!((s.pi_n - 0.1679).abs() < 5e-4);
        assert_eq!(activation_probability(&Torri { p: 0.1, u: 0.1, v: 0.0 }, 10).pi_n, 0.0);
    }
}
