//! Exact samplers and the model-identifiability experiment.
//!
//! All randomness flows from an [`RngSpec`]: a ChaCha8 generator keyed by a
//! seed and a stream id. Parallel work derives one stream per task, so results
//! do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Panel, YearRecord};
use crate::error::{Error, Result};
use crate::hierarchy::HierParams;
use crate::inference::{aic_select, fit, FitOptions, FittedParams, Specification};
use crate::models::{conditional_vasicek_rate, DavisLo, ModelParams};
use crate::numerics::std_normal_cdf;

/// Seed and substream of a deterministic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec { seed, stream: 0 }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent stream for task `(a, b)` derived from this one.
    pub fn substream(&self, a: u64, b: u64) -> RngSpec {
        RngSpec {
            seed: self.seed,
            stream: self
                .stream
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((a << 32) ^ b)
                .wrapping_add(1),
        }
    }
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> usize {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p)
        .expect("probability checked above")
        .sample(rng) as usize
}

/// One draw of the default count in a pool of `n`.
pub fn simulate_count<R: Rng + ?Sized>(params: &ModelParams, n: usize, rng: &mut R) -> Result<usize> {
    params.validate()?;
    Ok(match *params {
        ModelParams::DavisLo(m) => {
            let k = binomial(rng, n, m.p);
            let r = -(k as f64 * (-m.q).ln_1p()).exp_m1();
            k + binomial(rng, n - k, r)
        }
        ModelParams::Torri(m) => {
            let pv = m.p * m.v;
            let h = binomial(rng, n, pv);
            if pv >= 1.0 {
                n
            } else if h == 0 {
                binomial(rng, n, m.p * (1.0 - m.v) / (1.0 - pv))
            } else {
                let b = (m.p * (1.0 - m.v) + (1.0 - m.p) * (1.0 - m.u)) / (1.0 - pv);
                h + binomial(rng, n - h, b)
            }
        }
        ModelParams::Vasicek(m) => {
            let f: f64 = StandardNormal.sample(rng);
            binomial(rng, n, conditional_vasicek_rate(m.p, m.rho_a, f)?)
        }
    })
}

/// Largest pool accepted by [`davis_lo_indicator_count`].
pub const INDICATOR_MAX_N: usize = 200;

/// Davis-Lo count built obligor by obligor: each defaults on its own with
/// probability `p`, otherwise it defaults if infected by at least one
/// idiosyncratic defaulter, each link active with probability `q`. Quadratic
/// in `n`; meant as a reference for the mixture sampler.
pub fn davis_lo_indicator_count<R: Rng + ?Sized>(params: &DavisLo, n: usize, rng: &mut R) -> Result<usize> {
    params.validate()?;
    if n > INDICATOR_MAX_N {
        return Err(Error::Domain(format!(
            "indicator sampler is limited to n <= {INDICATOR_MAX_N}, got {n}"
        )));
    }
    let x: Vec<bool> = (0..n).map(|_| rng.gen_bool(params.p)).collect();
    let mut count = 0;
    for i in 0..n {
        let mut infected = false;
        for j in (0..n).filter(|&j| j != i) {
            // every link is drawn so the stream layout does not depend on x
            let y = rng.gen_bool(params.q);
            infected |= y && x[j];
        }
        if x[i] || infected {
            count += 1;
        }
    }
    Ok(count)
}

/// `draws` independent counts from one stream.
pub fn simulate_counts(params: &ModelParams, n: usize, draws: usize, spec: RngSpec) -> Result<Vec<usize>> {
    let mut rng = spec.rng();
    (0..draws).map(|_| simulate_count(params, n, &mut rng)).collect()
}

/// One yearly count of a hierarchical specification.
pub fn simulate_hier_count<R: Rng + ?Sized>(hp: &HierParams, n: usize, rng: &mut R) -> Result<usize> {
    hp.validate()?;
    let z: f64 = StandardNormal.sample(rng);
    let p = std_normal_cdf(hp.mu + hp.sigma * z);
    simulate_count(&hp.at(p), n, rng)
}

fn panel_from(pool_sizes: &[usize], first_year: i32, counts: Vec<usize>) -> Result<Panel> {
    let records = pool_sizes
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(t, (&n, defaults))| YearRecord {
            year: first_year + t as i32,
            n,
            defaults,
            class: "SIM".into(),
        })
        .collect();
    Panel::new("SIM", records)
}

fn check_pools(pool_sizes: &[usize]) -> Result<()> {
    if pool_sizes.is_empty() {
        return Err(Error::Empty("no pool sizes".into()));
    }
    if pool_sizes.contains(&0) {
        return Err(Error::Domain("pool sizes must be at least 1".into()));
    }
    Ok(())
}

/// Panel of yearly counts from a hierarchical specification.
pub fn simulate_hier_panel(hp: &HierParams, pool_sizes: &[usize], spec: RngSpec) -> Result<Panel> {
    check_pools(pool_sizes)?;
    let mut rng = spec.rng();
    let counts = pool_sizes
        .iter()
        .map(|&n| simulate_hier_count(hp, n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    panel_from(pool_sizes, 1, counts)
}

/// Panel of yearly counts from any fitted specification.
pub fn simulate_panel(params: &FittedParams, pool_sizes: &[usize], spec: RngSpec) -> Result<Panel> {
    match params {
        FittedParams::Hier(hp) => simulate_hier_panel(hp, pool_sizes, spec),
        FittedParams::Model(m) => {
            check_pools(pool_sizes)?;
            let mut rng = spec.rng();
            let counts = pool_sizes
                .iter()
                .map(|&n| simulate_count(m, n, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            panel_from(pool_sizes, 1, counts)
        }
    }
}

/// Frequencies with which AIC selects each family, per data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<Specification>,
    pub counts: Vec<Vec<usize>>,
    pub rates: Vec<Vec<f64>>,
    /// Replications whose fits failed, per row; excluded from the rates.
    pub failures: Vec<usize>,
    pub replications: usize,
    pub sample_size: usize,
    pub pool_size: usize,
}

impl ConfusionMatrix {
    pub fn rate(&self, row: usize, col: Specification) -> f64 {
        self.cols
            .iter()
            .position(|&c| c == col)
            .map_or(0.0, |j| self.rates[row][j])
    }

    pub fn total_failures(&self) -> usize {
        self.failures.iter().sum()
    }
}

/// Selected i.i.d. family for one simulated sample.
pub fn classify_sample(counts: &[usize], n: usize, opts: &FitOptions) -> Result<Specification> {
    let panel = Panel::from_counts("SIM", n, counts)?;
    let fits = Specification::IID
        .iter()
        .map(|&s| fit(s, &panel, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(aic_select(&fits)?.winner)
}

/// For each target and replication: draw `t` counts at pool size `n`, fit
/// the three i.i.d. families and record the AIC winner.
pub fn identifiability_experiment(
    targets: &[(String, ModelParams)],
    n: usize,
    t: usize,
    reps: usize,
    spec: RngSpec,
    opts: &FitOptions,
) -> Result<ConfusionMatrix> {
    if t == 0 || reps == 0 {
        return Err(Error::Domain("sample size and replications must be at least 1".into()));
    }
    if targets.is_empty() {
        return Err(Error::Empty("no target models".into()));
    }
    for (_, m) in targets {
        m.validate()?;
    }
    let tasks: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let outcomes: Vec<Option<Specification>> = tasks
        .par_iter()
        .map(|&(i, r)| {
            let stream = spec.substream(i as u64, r as u64);
            simulate_counts(&targets[i].1, n, t, stream)
                .and_then(|counts| classify_sample(&counts, n, opts))
                .ok()
        })
        .collect();
    let cols = Specification::IID.to_vec();
    let mut counts = vec![vec![0usize; cols.len()]; targets.len()];
    let mut failures = vec![0usize; targets.len()];
    for (&(i, _), out) in tasks.iter().zip(outcomes) {
        match out.and_then(|w| cols.iter().position(|&c| c == w)) {
            Some(j) => counts[i][j] += 1,
            None => failures[i] += 1,
        }
    }
    let rates = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        rows: targets.iter().map(|(name, _)| name.clone()).collect(),
        cols,
        counts,
        rates,
        failures,
        replications: reps,
        sample_size: t,
        pool_size: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Torri, Vasicek};

    #[test]
    fn zero_baseline_never_defaults() {
        let mut rng = RngSpec::new(1).rng();
        for m in [
            ModelParams::DavisLo(DavisLo { p: 0.0, q: 0.5 }),
            ModelParams::Torri(Torri { p: 0.0, u: 0.1, v: 0.9 }),
            ModelParams::Vasicek(Vasicek { p: 0.0, rho_a: 0.5 }),
        ] {
            for _ in 0..100 {
                assert_eq!(simulate_count(&m, 40, &mut rng).unwrap(), 0);
            }
        }
    }

    #[test]
    fn certain_default() {
        let mut rng = RngSpec::new(2).rng();
        let m = ModelParams::DavisLo(DavisLo { p: 1.0, q: 0.3 });
        assert_eq!(simulate_count(&m, 17, &mut rng).unwrap(), 17);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let m = ModelParams::Vasicek(Vasicek { p: 0.05, rho_a: 0.2 });
        let spec = RngSpec { seed: 9, stream: 4 };
        let a = simulate_counts(&m, 100, 50, spec).unwrap();
        assert_eq!(a, simulate_counts(&m, 100, 50, spec).unwrap());
        let b = simulate_counts(&m, 100, 50, spec.substream(0, 1)).unwrap();
        assert_ne!(a, b);
        assert_ne!(spec.substream(1, 0), spec.substream(0, 1));
    }

    #[test]
    fn indicator_sampler_limits() {
        let mut rng = RngSpec::new(3).rng();
        let m = DavisLo { p: 1.0, q: 0.2 };
        assert_eq!(davis_lo_indicator_count(&m, 12, &mut rng).unwrap(), 12);
        let m = DavisLo { p: 0.0, q: 0.9 };
        assert_eq!(davis_lo_indicator_count(&m, 12, &mut rng).unwrap(), 0);
        assert!(davis_lo_indicator_count(&m, INDICATOR_MAX_N + 1, &mut rng).is_err());
    }

    #[test]
    fn pool_sizes_are_checked() {
        let hp = HierParams {
            mu: -2.0,
            sigma: 0.3,
            structural: ModelParams::DavisLo(DavisLo { p: 0.0, q: 0.01 }),
        };
        assert!(simulate_hier_panel(&hp, &[], RngSpec::new(0)).is_err());
        assert!(simulate_hier_panel(&hp, &[10, 0], RngSpec::new(0)).is_err());
        let panel = simulate_hier_panel(&hp, &[10, 20, 30], RngSpec::new(0)).unwrap();
        assert_eq!(panel.len(), 3);
    }
}
