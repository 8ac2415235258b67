use rand::Rng;
use stsim_core::cellfield::{bad_cluster, ClusterUse, EventMode, IndicatorGrid};
use stsim_core::evasion::*;
use stsim_core::mobility::{DisplacementMode, TrajectorySet};
use stsim_core::rng::{replica_seed, stream, tag};
use stsim_core::tessellation::{Cell, CellWindow};

fn small(lambda: f64) -> EvasionConfig {
    let mut c = EvasionConfig::desk(lambda).unwrap();
    c.half_cells = 6;
    c
}

fn empty_traj(cfg: &EvasionConfig) -> TrajectorySet {
    let p = &cfg.params;
    let mut t = TrajectorySet::new(p.d, Vec::new(), p.beta, cfg.s, 0, 1, 1.0, None, true).unwrap();
    t.evolve(cfg.t_slices);
    t
}

#[test]
fn no_nodes_everything_vacant() {
    let cfg = small(0.0);
    let f = classify_cells(&empty_traj(&cfg), &cfg).unwrap();
    assert!(f.vacant.iter().all(|v| v.iter().all(|&x| x)));
    assert!(f.blocked.iter().all(|v| v.iter().all(|&x| !x)));
    let det = detection_certificate(&f);
    assert_ne!(det.verdict, Verdict::DetectionCertain);
    let ev = evasion_certificate(&f, EvasionMode::Hop);
    assert_eq!(ev.verdict, Verdict::EvasionPossible);
    assert!(ev.static_witness);
    let w = ev.witness.unwrap();
    assert_eq!(w.max_speed(), 0.0);
    assert_eq!(w.position_at(0.3 * cfg.params.beta), vec![0.0, 0.0]);
}

#[test]
fn still_node_at_centre_blocks_its_cube() {
    let cfg = small(0.0);
    let ell = cfg.params.ell;
    let t = empty_traj(&cfg).with_static_nodes(&[2.5 * ell, 0.5 * ell]).unwrap();
    let f = classify_cells(&t, &cfg).unwrap();
    let k = f.index(&[2, 0]).unwrap();
    for tau in 0..cfg.t_slices {
        assert!(f.blocked[tau][k]);
        assert!(!f.vacant[tau][k]);
        assert_eq!(f.blocked[tau].iter().filter(|&&b| b).count(), 1);
    }
}

#[test]
fn blocked_and_vacant_are_disjoint() {
    let cfg = small(2.0);
    for r in 0..5 {
        let t = cfg.realize(replica_seed(3, r)).unwrap();
        let f = classify_cells(&t, &cfg).unwrap();
        for tau in 0..f.slices {
            assert!(f.blocked[tau].iter().zip(&f.vacant[tau]).all(|(b, v)| !(*b && *v)));
        }
    }
}

#[test]
fn all_blocked_dies_at_slice_zero() {
    let cfg = small(0.0);
    let mut f = classify_cells(&empty_traj(&cfg), &cfg).unwrap();
    for b in f.blocked.iter_mut() {
        b.iter_mut().for_each(|x| *x = true);
    }
    for v in f.vacant.iter_mut() {
        v.iter_mut().for_each(|x| *x = false);
    }
    let det = detection_certificate(&f);
    assert_eq!(det.verdict, Verdict::DetectionCertain);
    assert_eq!(det.death_slice, Some(0));
    assert_eq!(det.frontier, vec![0]);
}

#[test]
fn node_near_origin_detects_at_time_zero() {
    let cfg = small(0.0);
    let t = empty_traj(&cfg).with_static_nodes(&[0.5, 0.2]).unwrap();
    let st = static_detection(&t, cfg.params.r, cfg.delta_safe(), cfg.t_slices).unwrap();
    assert_eq!(st.detected_at, Some(0.0));
    assert!(!st.uncertain);
    let f = classify_cells(&t, &cfg).unwrap();
    assert!(f.origin_covered_at_start);
    assert_eq!(detection_certificate(&f).verdict, Verdict::DetectionCertain);
}

#[test]
fn blocked_fraction_grows_with_lambda() {
    let ests: Vec<_> = [0.5, 2.0, 8.0]
        .iter()
        .map(|&l| {
            let mut cfg = small(l);
            cfg.t_slices = 2;
            let xs: Vec<f64> = (0..100)
                .map(|r| {
                    let t = cfg.realize(replica_seed(5, r)).unwrap();
                    classify_cells(&t, &cfg).unwrap().blocked_fraction()
                })
                .collect();
            stsim_core::stats::mean_estimate("blocked", &xs)
        })
        .collect();
    for w in ests.windows(2) {
        assert!(w[1].ci_low > w[0].ci_high, "{ests:?}");
    }
}

#[test]
fn void_probability_at_time_zero() {
    let (lambda, n) = (0.3, 2000u64);
    let mut cfg = small(lambda);
    cfg.t_slices = 1;
    cfg.half_cells = 3;
    let hits = (0..n)
        .filter(|&r| {
            let t = cfg.realize(replica_seed(17, r)).unwrap();
            static_detection(&t, 1.0, cfg.delta_safe(), 1).unwrap().detected_at == Some(0.0)
        })
        .count();
    let p = hits as f64 / n as f64;
    let want = 1.0 - (-lambda * std::f64::consts::PI).exp();
    assert!((p - want).abs() < 4.0 * (want * (1.0 - want) / n as f64).sqrt(), "{p} vs {want}");
}

#[test]
fn static_survival_is_nested_in_time() {
    let cfg = small(0.5);
    for r in 0..30 {
        let t = cfg.realize(replica_seed(8, r)).unwrap();
        let mut alive = true;
        for k in 1..=cfg.t_slices {
            let now = static_detection(&t, 1.0, cfg.delta_safe(), k).unwrap().detected_at.is_none();
            assert!(alive || !now);
            alive = now;
        }
    }
}

#[test]
fn certificates_are_exclusive_and_witnesses_replay() {
    let mut seen = [0usize; 3];
    for (n, &lambda) in [0.05, 0.3, 1.0, 3.0].iter().enumerate() {
        let cfg = small(lambda);
        let vmax = (2f64).sqrt() * cfg.params.ell / cfg.params.beta;
        for r in 0..15 {
            let t = cfg.realize(replica_seed(100 + n as u64, r)).unwrap();
            let f = classify_cells(&t, &cfg).unwrap();
            let det = detection_certificate(&f);
            if det.verdict == Verdict::DetectionCertain {
                assert_eq!(det.frontier.last(), Some(&0));
                seen[0] += 1;
            }
            let hop = evasion_certificate(&f, EvasionMode::Hop);
            let clo = evasion_certificate(&f, EvasionMode::Closure);
            for ev in [&hop, &clo] {
                if ev.verdict == Verdict::EvasionPossible {
                    assert_ne!(det.verdict, Verdict::DetectionCertain);
                    let w = ev.witness.as_ref().unwrap();
                    assert!(replay_witness(&t, w, cfg.params.r, cfg.t_slices, None).unwrap());
                    assert_eq!(w.knots.last().unwrap().0, cfg.t_slices as f64 * cfg.params.beta);
                }
            }
            if hop.verdict == Verdict::EvasionPossible {
                assert_eq!(clo.verdict, Verdict::EvasionPossible);
                assert!(hop.witness.as_ref().unwrap().max_speed() <= vmax * (1.0 + 1e-9));
                seen[1] += 1;
            }
            if clo.verdict == Verdict::EvasionPossible {
                seen[2] += 1;
            }
        }
    }
    assert!(seen.iter().all(|&c| c > 0), "{seen:?}");
}

#[test]
fn moving_witnesses_replay_over_long_horizons() {
    let mut cfg = small(0.3);
    cfg.t_slices = 150;
    let vmax = (2f64).sqrt() * cfg.params.ell / cfg.params.beta;
    let mut moving = [0usize; 2];
    for r in 0..30 {
        let t = cfg.realize(replica_seed(61, r)).unwrap();
        let f = classify_cells(&t, &cfg).unwrap();
        let det = detection_certificate(&f);
        for (m, mode) in [EvasionMode::Hop, EvasionMode::Closure].into_iter().enumerate() {
            let ev = evasion_certificate(&f, mode);
            if ev.verdict == Verdict::EvasionPossible && !ev.static_witness {
                moving[m] += 1;
                assert_ne!(det.verdict, Verdict::DetectionCertain);
                let w = ev.witness.as_ref().unwrap();
                assert!(replay_witness(&t, w, cfg.params.r, cfg.t_slices, None).unwrap());
                if mode == EvasionMode::Hop {
                    assert!(w.max_speed() <= vmax * (1.0 + 1e-9));
                }
            }
        }
    }
    assert!(moving[1] > 0, "{moving:?}");
}

#[test]
fn thinning_moves_verdicts_one_way() {
    let cfg = small(1.5);
    for r in 0..20 {
        let t = cfg.realize(replica_seed(44, r)).unwrap();
        let mut rng = stream(r, &[tag::THIN]);
        let mask: Vec<bool> = (0..t.n()).map(|_| rng.random::<f64>() < 0.5).collect();
        let full = classify_cells(&t, &cfg).unwrap();
        let thin = stsim_core::evasion::classify_cells_masked(&t, &cfg, Some(&mask)).unwrap();
        if detection_certificate(&thin).verdict == Verdict::DetectionCertain {
            assert_eq!(detection_certificate(&full).verdict, Verdict::DetectionCertain);
        }
        for mode in [EvasionMode::Hop, EvasionMode::Closure] {
            if evasion_certificate(&full, mode).verdict == Verdict::EvasionPossible {
                assert_eq!(evasion_certificate(&thin, mode).verdict, Verdict::EvasionPossible);
            }
        }
    }
}

#[test]
fn frontier_agrees_with_bad_clusters() {
    // blocked cells are exactly the detect-mode E cells with w = 1
    let (mut contained, mut certain) = (0, 0);
    for (n, &lambda) in [1.0, 3.0, 6.0].iter().enumerate() {
        let mut cfg = small(lambda);
        cfg.half_cells = 8;
        let hc = 4i64;
        let p = cfg.params.clone();
        for r in 0..17 {
            let seed = replica_seed(900 + n as u64, r);
            let mut sim = cfg.sim_config(seed);
            sim.start_slice = -1;
            sim.slices = cfg.t_slices + 2;
            let t = sim.realize().unwrap();
            let f = classify_cells(&t, &cfg).unwrap();
            let window = CellWindow {
                k: 1,
                space: vec![(-hc, hc); 2],
                time: (0, cfg.t_slices as i64 - 1),
            };
            let domain = (vec![-sim.half_width; 2], vec![sim.half_width; 2]);
            let grid = IndicatorGrid::new(&p, &t, EventMode::Detect, DisplacementMode::Conservative { q: cfg.q }, window, domain).unwrap();
            for tau in 0..cfg.t_slices as i64 {
                for i in -hc..=hc {
                    for j in -hc..=hc {
                        let e = grid.indicator_e(&Cell::new(1, vec![i, j], tau)).unwrap();
                        assert_eq!(e, f.blocked[tau as usize][f.index(&[i, j]).unwrap()]);
                    }
                }
            }
            let k = bad_cluster(&grid, &Cell::new(1, vec![0, 0], 0), ClusterUse::E).unwrap();
            let last = k.cells.iter().map(|c| c.tau).max().unwrap_or(-1);
            if !k.escaped && last <= cfg.t_slices as i64 - 2 {
                contained += 1;
                assert_eq!(detection_certificate(&f).verdict, Verdict::DetectionCertain, "seed {seed}");
            }
            certain += usize::from(detection_certificate(&f).verdict == Verdict::DetectionCertain);
        }
    }
    assert!(contained + certain > 0);
    assert!(contained >= 10, "only {contained} contained clusters");
}

#[test]
fn bracket_at_zero_intensity() {
    let rep = rho_bracket(&small(0.0), 5, 1).unwrap();
    assert_eq!((rep.low.value, rep.up.value), (1.0, 1.0));
}

#[test]
fn desk_brackets() {
    let dense = rho_bracket(&EvasionConfig::desk(5.0).unwrap(), 200, 21).unwrap();
    assert!(dense.up.value <= 0.1, "{:?}", dense.up);
    let sparse = rho_bracket(&EvasionConfig::desk(0.05).unwrap(), 200, 22).unwrap();
    assert!(sparse.low.value >= 0.5, "{:?}", sparse.low);
    for rep in [&dense, &sparse] {
        assert!(rep.low.value <= rep.up.value);
        for row in &rep.rows {
            let low = row.evasion == Verdict::EvasionPossible;
            let up = row.detection != Verdict::DetectionCertain;
            assert!(!low || up);
            assert!(!row.static_certain_survival || low);
        }
        assert!(rep.low.value >= rep.static_certain_survival.value);
        assert_eq!(rep.exclusivity_violations, 0);
        assert_eq!(rep.replay_failures, 0);
        assert!(rep.rows.iter().all(|r| r.replay_ok.is_some() == (r.evasion == Verdict::EvasionPossible)));
    }
}
