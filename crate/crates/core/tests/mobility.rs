use proptest::prelude::*;
use stsim_core::bounds::{confinement_bound, confinement_exact};
use stsim_core::mobility::suite::{
    confinement_check, measure_preservation, origin_coverage, ppp_independence, slice_variance, torus_mean_count,
};
use stsim_core::mobility::{Boundary, DisplacementMode, SimConfig, TrajectorySet};

#[test]
fn ppp_counts_are_poisson_and_independent() {
    let (rep, corr) = ppp_independence(2, 3.0, 4.0, 800, 11).unwrap();
    assert!(rep.mean_ok(), "{rep:?}");
    assert!(rep.dispersion_ok(), "{rep:?}");
    assert!(corr.abs() < 0.12, "corr {corr}");
}

#[test]
fn one_slice_variance_matches_beta() {
    let v = slice_variance(2, 3.0, 20_000, 8, 4).unwrap();
    assert!((v - 3.0).abs() / 3.0 < 0.05, "{v}");
}

#[test]
fn counts_are_preserved_after_moving() {
    let (c0, c1) = measure_preservation(2, 2.0, 5.0, 5.0, 500, 7).unwrap();
    for rep in [&c0, &c1] {
        assert!(rep.mean_ok(), "{rep:?}");
        assert!(rep.dispersion_ok(), "{rep:?}");
    }
}

#[test]
fn torus_keeps_mean_count() {
    let m = torus_mean_count(1, 5.0, 10.0, 3, 300, 2).unwrap();
    assert!((m - 100.0).abs() < 3.0 * (100.0f64 / 300.0).sqrt(), "{m}");
}

#[test]
fn confinement_bound_is_below_empirical() {
    for (d, delta, z) in [(1, 1.0, 4.0), (2, 1.0, 5.0), (1, 2.0, 5.0)] {
        let (emp, bound) = confinement_check(d, delta, z, 10_000, 256, 3).unwrap();
        assert!(emp.ci_high >= bound, "d={d} {emp:?} bound {bound}");
        // fine sub-steps overestimate staying probability only slightly
        let exact = confinement_exact(d, delta, z);
        assert!(emp.ci_low <= exact + 0.02 && emp.ci_high >= exact - 0.02, "{emp:?} vs {exact}");
    }
}

#[test]
fn origin_covered_probability() {
    let est = origin_coverage(2, 1.0, 1.0, 4000, 9).unwrap();
    let truth = 1.0 - (-std::f64::consts::PI).exp();
    assert!(est.ci_low <= truth && truth <= est.ci_high, "{est:?} vs {truth}");
}

#[test]
fn same_seed_same_paths_for_any_thread_count() {
    let cfg = SimConfig::new(2, 1.0, 1.0, 6.0, 1.0, 4, 4, 42);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| cfg.realize().unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.n(), b.n());
    for s in 0..=4 {
        assert_eq!(a.positions_at_slice(s).unwrap(), b.positions_at_slice(s).unwrap());
    }
}

#[test]
fn torus_positions_stay_in_box() {
    let mut cfg = SimConfig::new(1, 2.0, 0.5, 3.0, 4.0, 5, 4, 8);
    cfg.boundary = Boundary::Torus;
    let t = cfg.realize().unwrap();
    for s in 0..=5 {
        assert!(t.positions_at_slice(s).unwrap().iter().all(|x| (-3.0..3.0).contains(x)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservative_implies_checked(seed in 0u64..1000, z in 0.5f64..6.0) {
        let mut t = TrajectorySet::new(1, vec![0.0; 20], 1.0, 16, 0, seed, 1.0, None, false).unwrap();
        t.evolve(2);
        for v in 0..20 {
            let strict = t.displacement_in(v, 0.0, 2.0, z, DisplacementMode::Conservative { q: 3.0 }).unwrap();
            let loose = t.displacement_in(v, 0.0, 2.0, z, DisplacementMode::Checked).unwrap();
            prop_assert!(!strict || loose);
        }
    }

    #[test]
    fn deviation_grows_with_the_interval(seed in 0u64..1000) {
        let mut t = TrajectorySet::new(2, vec![0.0; 10], 1.0, 8, 0, seed, 1.0, None, false).unwrap();
        t.evolve(4);
        for v in 0..5 {
            let a = t.max_deviation(v, 0.0, 2.0).unwrap();
            let b = t.max_deviation(v, 0.0, 3.0).unwrap();
            let inner = t.max_deviation(v, 1.0, 2.0).unwrap();
            prop_assert!(a <= b);
            prop_assert!(inner <= 2.0 * b + 1e-12);
        }
    }

    #[test]
    fn confinement_bound_monotone_in_z(d in 1usize..4, delta in 0.1f64..5.0, k in 3.0f64..10.0) {
        let z = k * delta.sqrt();
        let a = confinement_bound(d, delta, z).unwrap();
        let b = confinement_bound(d, delta, z * 1.5).unwrap();
        prop_assert!(a <= b + 1e-12);
        prop_assert!(a <= confinement_exact(d, delta, z) + 1e-9);
    }
}
