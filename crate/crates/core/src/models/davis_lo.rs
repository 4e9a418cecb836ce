use super::mixture::ProbitPoint;
use super::{ln_pair, pow_ln, CountDistribution, DavisLo};
use crate::numerics::special::{ln_binom_pmf, LogSumAcc};

/// `(ln r_k, ln(1 - r_k))` with `r_k = 1 - (1-q)^k`.
#[inline]
fn ln_infection(k: usize, ln_1mq: f64) -> (f64, f64) {
    let ln_surv = pow_ln(k, ln_1mq);
    ((-ln_surv.exp_m1()).ln(), ln_surv)
}

/// Seed-conditional mixture: `L | K=k ~ k + Binomial(n-k, r_k)`, `K ~ Binomial(n, p)`.
pub fn davis_lo_pmf(params: &DavisLo, n: usize) -> CountDistribution {
    let (ln_p, ln_1mp) = ln_pair(params.p);
    let ln_1mq = (-params.q).ln_1p();
    let mut acc = vec![LogSumAcc::default(); n + 1];
    for k in 0..=n {
        let w = ln_binom_pmf(k, n, ln_p, ln_1mp);
        if w == f64::NEG_INFINITY {
            continue;
        }
        let (ln_r, ln_1mr) = ln_infection(k, ln_1mq);
        for (j, slot) in acc[k..].iter_mut().enumerate() {
            slot.add(w + ln_binom_pmf(j, n - k, ln_r, ln_1mr));
        }
    }
    CountDistribution::from_normalized(acc.iter().map(LogSumAcc::value).collect())
}

/// `ln P(L = h)` at the requested counts only; `O(Σ h)` work.
pub fn davis_lo_log_probs_at(params: &DavisLo, n: usize, counts: &[usize]) -> Vec<f64> {
    let h_max = counts.iter().copied().max().unwrap_or(0).min(n);
    let (ln_p, ln_1mp) = ln_pair(params.p);
    let ln_1mq = (-params.q).ln_1p();
    let seeds: Vec<(f64, f64, f64)> = (0..=h_max)
        .map(|k| {
            let (ln_r, ln_1mr) = ln_infection(k, ln_1mq);
            (ln_binom_pmf(k, n, ln_p, ln_1mp), ln_r, ln_1mr)
        })
        .collect();
    counts
        .iter()
        .map(|&h| {
            if h > n {
                return f64::NEG_INFINITY;
            }
            let mut acc = LogSumAcc::default();
            for (k, &(w, ln_r, ln_1mr)) in seeds[..=h].iter().enumerate() {
                if w > f64::NEG_INFINITY {
                    acc.add(w + ln_binom_pmf(h - k, n - k, ln_r, ln_1mr));
                }
            }
            acc.value()
        })
        .collect()
}

/// Depth of the per-node seed-count window, in nats below the mode.
const SEED_WINDOW: f64 = 100.0;
/// Truncation error tolerated below a column's value, in nats.
const SEED_MARGIN: f64 = 32.0;

/// Point evaluator for many baseline rates at fixed `(q, n)` and counts.
///
/// The contagion kernel `Binomial(n-k, r_k; h-k)` does not depend on `p`, so
/// it is tabulated once. Mixing over `p` then acts on the seed-count law
/// alone: `P(L = h) = Σ_k E[Binomial(n, p; k)] kernel[k][h]`.
#[derive(Debug, Clone)]
pub struct DavisLoTable {
    n: usize,
    counts: Vec<usize>,
    /// `ln kernel[k][j]` for count `counts[j]`.
    log_kernel: Vec<Vec<f64>>,
    /// Kernel scaled by its column maximum.
    scaled: Vec<Vec<f64>>,
    col_max: Vec<f64>,
}

impl DavisLoTable {
    pub fn new(q: f64, n: usize, counts: &[usize]) -> Self {
        let counts: Vec<usize> = counts.iter().map(|&h| h.min(n + 1)).collect();
        let k_max = counts.iter().copied().filter(|&h| h <= n).max().unwrap_or(0);
        let ln_1mq = (-q).ln_1p();
        let log_kernel: Vec<Vec<f64>> = (0..=k_max)
            .map(|k| {
                let (ln_r, ln_1mr) = ln_infection(k, ln_1mq);
                counts
                    .iter()
                    .map(|&h| {
                        if h > n || k > h {
                            f64::NEG_INFINITY
                        } else {
                            ln_binom_pmf(h - k, n - k, ln_r, ln_1mr)
                        }
                    })
                    .collect()
            })
            .collect();
        let col_max: Vec<f64> = (0..counts.len())
            .map(|j| {
                log_kernel
                    .iter()
                    .map(|row| row[j])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let scaled = log_kernel
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&col_max)
                    .map(|(&v, &c)| if c == f64::NEG_INFINITY { 0.0 } else { (v - c).exp() })
                    .collect()
            })
            .collect();
        DavisLoTable {
            n,
            counts,
            log_kernel,
            scaled,
            col_max,
        }
    }

    /// `ln P(L = h)` for every tabulated count at a single baseline rate.
    pub fn log_probs(&self, ln_p: f64, ln_1mp: f64) -> Vec<f64> {
        let point = ProbitPoint {
            p: ln_p.exp(),
            ln_p,
            ln_1mp,
        };
        self.mixture_log_probs(&[(0.0, point)])
    }

    /// `ln P(L = h)` for every tabulated count when the baseline rate is
    /// drawn from `nodes` (`(ln weight, point)` with weights summing to one).
    pub fn mixture_log_probs(&self, nodes: &[(f64, ProbitPoint)]) -> Vec<f64> {
        let dim = self.log_kernel.len();
        let mut seed_law = vec![0.0; dim];
        for (ln_w, pt) in nodes {
            self.add_seed_law(&mut seed_law, *ln_w, pt);
        }
        let mut sums = vec![0.0; self.counts.len()];
        for (a, row) in seed_law.iter().zip(&self.scaled) {
            if *a == 0.0 {
                continue;
            }
            for (s, &t) in sums.iter_mut().zip(row) {
                *s += a * t;
            }
        }
        // windows drop at most e^-SEED_WINDOW per seed count
        let trusted = (SEED_MARGIN - SEED_WINDOW).exp() * dim as f64;
        sums.iter()
            .enumerate()
            .map(|(j, &s)| {
                if self.counts[j] > self.n || self.col_max[j] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else if s > trusted {
                    self.col_max[j] + s.ln()
                } else {
                    self.exact_column(j, nodes)
                }
            })
            .collect()
    }

    /// Adds `w Binomial(n, p; k)` over the window of `k` around the mode.
    fn add_seed_law(&self, acc: &mut [f64], ln_w: f64, pt: &ProbitPoint) {
        let n = self.n;
        let last = acc.len() - 1;
        if pt.ln_p == f64::NEG_INFINITY {
            acc[0] += ln_w.exp();
            return;
        }
        if pt.ln_1mp == f64::NEG_INFINITY {
            if n <= last {
                acc[n] += ln_w.exp();
            }
            return;
        }
        let mode = (((n + 1) as f64 * pt.p).floor() as usize).min(n);
        let floor = ln_binom_pmf(mode, n, pt.ln_p, pt.ln_1mp) - SEED_WINDOW;
        let start = mode.min(last);
        let ln_start = ln_binom_pmf(start, n, pt.ln_p, pt.ln_1mp);
        if ln_start < floor {
            return;
        }
        let odds = (pt.ln_p - pt.ln_1mp).exp();
        let cut = (ln_w + floor).exp();
        let first = (ln_w + ln_start).exp();
        acc[start] += first;
        let (mut v, mut k) = (first, start);
        while k > 0 {
            v *= k as f64 / ((n - k + 1) as f64 * odds);
            k -= 1;
            if v < cut {
                break;
            }
            acc[k] += v;
        }
        let (mut v, mut k) = (first, start);
        while k < last {
            v *= (n - k) as f64 / (k + 1) as f64 * odds;
            k += 1;
            if v < cut {
                break;
            }
            acc[k] += v;
        }
    }

    /// Column `j` summed in log space over all nodes and seed counts.
    fn exact_column(&self, j: usize, nodes: &[(f64, ProbitPoint)]) -> f64 {
        let h = self.counts[j];
        let mut acc = LogSumAcc::default();
        for (ln_w, pt) in nodes {
            for k in 0..=h.min(self.log_kernel.len() - 1) {
                acc.add(ln_w + ln_binom_pmf(k, self.n, pt.ln_p, pt.ln_1mp) + self.log_kernel[k][j]);
            }
        }
        acc.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_contagion_is_binomial() {
        let d = davis_lo_pmf(&DavisLo { p: 0.17, q: 0.0 }, 10);
        let b = CountDistribution::binomial(10, 0.17);
        assert!(d.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn no_seeds_is_point_mass() {
        let d = davis_lo_pmf(&DavisLo { p: 0.0, q: 0.4 }, 7);
        assert_eq!(d.prob(0), 1.0);
    }

    #[test]
    fn full_default() {
        let d = davis_lo_pmf(&DavisLo { p: 1.0, q: 0.3 }, 6);
        assert_eq!(d.prob(6), 1.0);
        // with q = 1 a single seed takes down the pool
        let d = davis_lo_pmf(&DavisLo { p: 0.1, q: 1.0 }, 5);
        assert!((d.prob(0) - 0.9f64.powi(5)).abs() < 1e-14);
        assert!((d.prob(5) - (1.0 - 0.9f64.powi(5))).abs() < 1e-14);
    }

    #[test]
    fn small_pool_enumeration() {
        // n = 2: P(L=0) = (1-p)^2, P(L=1) = 2p(1-p)(1-q), P(L=2) = p^2 + 2p(1-p)q
        let (p, q) = (0.3, 0.4);
        let d = davis_lo_pmf(&DavisLo { p, q }, 2);
        assert!((d.prob(0) - (1.0 - p) * (1.0 - p)).abs() < 1e-15);
        assert!((d.prob(1) - 2.0 * p * (1.0 - p) * (1.0 - q)).abs() < 1e-15);
        assert!((d.prob(2) - (p * p + 2.0 * p * (1.0 - p) * q)).abs() < 1e-15);
    }

    #[test]
    fn table_matches_full() {
        let hs = [0usize, 3, 17, 60, 150, 151];
        let table = DavisLoTable::new(0.004, 150, &hs);
        for p in [1e-6, 0.003, 0.2, 0.9] {
            let d = davis_lo_pmf(&DavisLo { p, q: 0.004 }, 150);
            let got = table.log_probs(p.ln(), (-p).ln_1p());
            for (j, &h) in hs.iter().enumerate() {
                let want = d.log_pmf().get(h).copied().unwrap_or(f64::NEG_INFINITY);
                if want == f64::NEG_INFINITY {
                    assert_eq!(got[j], want);
                } else {
                    assert!((got[j] - want).abs() < 1e-9, "p={p} h={h}: {} vs {want}", got[j]);

                }
            }
        }
    }

    #[test]
    fn mixture_matches_weighted_pmfs() {
        let hs = [0usize, 2, 9, 40, 80];
        let table = DavisLoTable::new(0.01, 80, &hs);
        let nodes: Vec<(f64, ProbitPoint)> = [(-2.5, 0.2), (-1.0, 0.5), (0.5, 0.3)]
            .iter()
            .map(|&(z, w): &(f64, f64)| (w.ln(), ProbitPoint::from_probit(z)))
            .collect();
        let got = table.mixture_log_probs(&nodes);
        for (j, &h) in hs.iter().enumerate() {
            let want: f64 = nodes
                .iter()
                .map(|(ln_w, pt)| ln_w.exp() * davis_lo_pmf(&DavisLo { p: pt.p, q: 0.01 }, 80).prob(h))
                .sum();
            assert!((got[j] - want.ln()).abs() < 1e-10, "h={h}");
        }
    }

    #[test]
    fn point_evaluation_matches_full() {
        let m = DavisLo { p: 0.004, q: 0.05 };
        let d = davis_lo_pmf(&m, 120);
        let hs = [0usize, 1, 7, 30, 120];
        let at = davis_lo_log_probs_at(&m, 120, &hs);
        for (h, v) in hs.iter().zip(at) {
            assert!((d.log_pmf()[*h] - v).abs() < 1e-10);
        }
    }
}
