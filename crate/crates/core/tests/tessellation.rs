use proptest::prelude::*;
use stsim_core::tessellation::verify::{run_suite, weight_suite, VerifyWindow};
use stsim_core::tessellation::{relation, support, Cell, SpaceKind, TimeKind};
use stsim_core::ScaleParams;

fn params(d: usize, m: u64) -> ScaleParams {
    ScaleParams::new(d, m, 1, 0.5, 1.0, 1.0).unwrap().with_kappa(4).unwrap()
}

#[test]
fn lemma_suite_full_window() {
    for (d, m) in [(1, 14), (2, 28)] {
        let checks = run_suite(&params(d, m), &VerifyWindow::default()).unwrap();
        for c in &checks {
            assert!(c.passed(), "d={d}: {c:?}");
        }
    }
}

#[test]
fn weight_laws_all_dims() {
    for (d, m) in [(1, 14), (2, 28), (3, 56)] {
        let p = ScaleParams::new(d, m, 1, 0.5, 1.0, 1.0).unwrap();
        for c in weight_suite(&p, 60).unwrap() {
            assert!(c.passed(), "d={d}: {c:?}");
        }
    }
}

fn cell(d: usize) -> impl Strategy<Value = Cell> {
    (1usize..=3, prop::collection::vec(-40i64..40, d), -40i64..40).prop_map(|(k, i, t)| Cell::new(k, i, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn relation_is_symmetric(a in cell(2), b in cell(2)) {
        let p = params(2, 28);
        let ab = relation(&p, &a, &b).unwrap();
        let ba = relation(&p, &b, &a).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn extended_support_contains_support(a in cell(1)) {
        let p = params(1, 14);
        let s = support(&p, &a, false).unwrap();
        let e = support(&p, &a, true).unwrap();
        prop_assert!(e.contains(&s));
        prop_assert_eq!(e.space.side(0), 3 * s.space.side(0));
        prop_assert_eq!(e.time.len(), 3 * s.time.len());
    }

    #[test]
    fn cube_inside_base_inside_influence(a in cell(2)) {
        let p = params(2, 28);
        let c = stsim_core::tessellation::region(&p, a.k, &a.i, SpaceKind::Cube).unwrap();
        let b = stsim_core::tessellation::region(&p, a.k, &a.i, SpaceKind::Base).unwrap();
        let f = stsim_core::tessellation::region(&p, a.k, &a.i, SpaceKind::Influence).unwrap();
        prop_assert!(b.contains(&c) && f.contains(&b));
    }

    #[test]
    fn interval_inside_support_time(a in cell(1)) {
        let p = params(1, 14);
        let t = stsim_core::tessellation::time_region(&p, a.k, a.tau, TimeKind::Interval).unwrap();
        let s = stsim_core::tessellation::time_region(&p, a.k, a.tau, TimeKind::Support).unwrap();
        prop_assert!(s.contains(&t));
    }

    #[test]
    fn pi_gamma_compose(k in 1usize..=2, j in 0usize..=2, x in -100_000i64..100_000) {
        let p = params(2, 28);
        prop_assume!(k + j <= 4);
        for j2 in 0..=j {
            prop_assert_eq!(p.pi_1d(k, j, x).unwrap(), p.pi_1d(k + j2, j - j2, p.pi_1d(k, j2, x).unwrap()).unwrap());
            prop_assert_eq!(p.gamma(k, j, x).unwrap(), p.gamma(k + j2, j - j2, p.gamma(k, j2, x).unwrap()).unwrap());
        }
    }
}
