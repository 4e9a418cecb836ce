//! Invariants of the count laws, moments, divergences and risk measures.

use proptest::prelude::*;

use defaultlab::divergence::{kl_divergence, kl_project, ProjectionOptions};
use defaultlab::hierarchy::{hier_pmf, variance_parts, HierParams};
use defaultlab::models::{
    davis_lo_pmf, torri_pmf, torri_pmf_mgf, vasicek_pmf, CountDistribution, DavisLo, ModelParams, Torri,
    Vasicek,
};
use defaultlab::moments::pmf_moments;
use defaultlab::numerics::{std_normal_cdf, std_normal_quantile, Quadrature};
use defaultlab::riskmeasures::{expected_shortfall, survival, value_at_risk};

fn prob() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64]
}

fn small_prob() -> impl Strategy<Value = f64> {
    prop_oneof![1e-4..0.05f64, 0.0..=1.0f64]
}

fn davis_lo() -> impl Strategy<Value = DavisLo> {
    (small_prob(), prob()).prop_map(|(p, q)| DavisLo { p, q })
}

fn torri() -> impl Strategy<Value = Torri> {
    (small_prob(), prob(), prob()).prop_map(|(p, u, v)| Torri { p, u, v })
}

fn vasicek() -> impl Strategy<Value = Vasicek> {
    (1e-4..0.5f64, 0.0..0.9f64).prop_map(|(p, rho_a)| Vasicek { p, rho_a })
}

fn model() -> impl Strategy<Value = ModelParams> {
    prop_oneof![
        davis_lo().prop_map(ModelParams::DavisLo),
        torri().prop_map(ModelParams::Torri),
        vasicek().prop_map(ModelParams::Vasicek),
    ]
}

fn hier() -> impl Strategy<Value = HierParams> {
    let structural = prop_oneof![
        (0.0..0.05f64).prop_map(|q| ModelParams::DavisLo(DavisLo { p: 0.0, q })),
        (0.3..1.0f64, 0.0..0.6f64).prop_map(|(u, v)| ModelParams::Torri(Torri { p: 0.0, u, v })),
    ];
    (-3.5..-1.0f64, 0.0..1.2f64, structural).prop_map(|(mu, sigma, s)| HierParams {
        mu,
        sigma,
        structural: s,
    })
}

fn total_mass(d: &CountDistribution) -> f64 {
    d.pmf().iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn pmfs_are_normalized(m in model(), n in 1usize..300) {
        let d = m.pmf(n, Quadrature::Auto).unwrap();
        prop_assert_eq!(d.n(), n);
        prop_assert!((total_mass(&d) - 1.0).abs() < 1e-10);
        prop_assert!(d.pmf().iter().all(|&p| (0.0..=1.0 + 1e-15).contains(&p)));
    }

    #[test]
    fn hierarchical_pmfs_are_normalized(hp in hier(), n in 2usize..150) {
        let d = hier_pmf(&hp, n, Quadrature::Auto).unwrap();
        prop_assert!((total_mass(&d) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn torri_routes_agree(t in torri(), n in 1usize..300) {
        prop_assert!(torri_pmf(&t, n).max_abs_diff(&torri_pmf_mgf(&t, n)) < 1e-10);
    }

    #[test]
    fn binomial_reductions(p in prob(), x in prob(), n in 1usize..200) {
        let b = CountDistribution::binomial(n, p);
        let dl = davis_lo_pmf(&DavisLo { p, q: 0.0 }, n);
        let quiet = torri_pmf(&Torri { p, u: x, v: 0.0 }, n);
        let immune = torri_pmf(&Torri { p, u: 1.0, v: x }, n);
        prop_assert!(dl.max_abs_diff(&b) < 1e-10);
        prop_assert!(quiet.max_abs_diff(&b) < 1e-10);
        prop_assert!(immune.max_abs_diff(&b) < 1e-10);
        let v = vasicek_pmf(&Vasicek { p, rho_a: 0.0 }, n, Quadrature::Auto).unwrap();
        prop_assert!(v.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn flat_environment_is_the_base_model(hp in hier(), n in 2usize..150) {
        let flat = HierParams { sigma: 0.0, ..hp };
        let base = hp.at(std_normal_cdf(hp.mu)).pmf(n, Quadrature::Auto).unwrap();
        prop_assert!(hier_pmf(&flat, n, Quadrature::Auto).unwrap().max_abs_diff(&base) < 1e-10);
    }

    #[test]
    fn closed_form_moments_match_pmf(m in model(), n in 2usize..300) {
        let closed = m.moments(n, Quadrature::Auto).unwrap();
        let summed = pmf_moments(&m.pmf(n, Quadrature::Auto).unwrap()).unwrap();
        prop_assert!((closed.m - summed.m).abs() < 1e-8, "{closed:?} {summed:?}");
        prop_assert!((closed.p11 - summed.p11).abs() < 1e-8, "{closed:?} {summed:?}");
    }

    #[test]
    fn law_of_total_variance(hp in hier(), n in 2usize..150) {
        let parts = variance_parts(&hp, n, Quadrature::Auto).unwrap();
        let var = hier_pmf(&hp, n, Quadrature::Auto).unwrap().variance();
        prop_assume!(var > 1e-12);
        prop_assert!((parts.total() - var).abs() <= 1e-6 * var, "{} vs {}", parts.total(), var);
    }

    #[test]
    fn kl_is_non_negative(a in model(), b in model(), n in 1usize..120) {
        let p = a.pmf(n, Quadrature::Auto).unwrap();
        let q = b.pmf(n, Quadrature::Auto).unwrap();
        let d = kl_divergence(&p, &q).unwrap();
        prop_assert!(d >= 0.0, "kl = {d}");
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn risk_measures_are_ordered(m in model(), n in 1usize..250, a in 0.5..0.999f64, b in 0.5..0.999f64) {
        let d = m.pmf(n, Quadrature::Auto).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (v_lo, v_hi) = (value_at_risk(&d, lo).unwrap(), value_at_risk(&d, hi).unwrap());
        prop_assert!(v_lo <= v_hi);
        if let Ok(es) = expected_shortfall(&d, hi) {
            prop_assert!(es >= v_hi as f64 - 1e-9);
        }
        // VaR is the generalized inverse of the CDF
        let cdf = d.cdf();
        prop_assert!(cdf[v_hi] >= hi - 1e-12);
        prop_assert!(v_hi == 0 || cdf[v_hi - 1] < hi);
        let s = survival(&d);
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn normal_quantile_round_trip(u in 1e-12..(1.0 - 1e-12f64)) {
        let x = std_normal_quantile(u).unwrap();
        prop_assert!((std_normal_cdf(x) - u).abs() <= 1e-8 * u.min(1.0 - u).max(1e-300) + 1e-15);
    }

    #[test]
    fn normal_cdf_round_trip(x in -8.0..5.0f64) {
        // beyond 5 one ulp of u near 1 already exceeds the tolerance in x
        let u = std_normal_cdf(x);
        prop_assert!((std_normal_quantile(u).unwrap() - x).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn members_project_onto_themselves(m in model(), n in 20usize..120) {
        prop_assume!(m.p() > 1e-3 && m.p() < 0.5);
        let target = m.pmf(n, Quadrature::Auto).unwrap();
        let res = kl_project(&target, m.family(), &ProjectionOptions::default()).unwrap();
        prop_assert!(res.kl >= 0.0 && res.kl < 1e-6, "{m:?} -> {res:?}");
    }
}
