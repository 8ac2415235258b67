//! Pathwise checks of the indicator algebra on sampled realizations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{bad_cluster, domain_of, realize_for, ClusterUse, EventMode, IndicatorGrid};
use crate::error::Result;
use crate::mobility::DisplacementMode;
use crate::rng::replica_seed;
use crate::tessellation::{Cell, CellWindow, ScaleParams};

/// Realizations cycle through `lambdas` and alternate the two event modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraConfig {
    pub params: ScaleParams,
    pub lambdas: Vec<f64>,
    pub window: CellWindow,
    pub substeps: usize,
    #[serde(default)]
    pub displacement: DisplacementMode,
}

impl AlgebraConfig {
    /// One-dimensional two-scale fixture small enough for a desk run.
    pub fn desk() -> Result<Self> {
        let params = ScaleParams::new(1, 7, 1, 0.5, 1.0, 0.05)?.with_kappa(2)?;
        Ok(AlgebraConfig {
            params,
            lambdas: vec![3.0, 8.0, 50.0],
            window: CellWindow {
                k: 1,
                space: vec![(-3, 3)],
                time: (1, 6),
            },
            substeps: 1,
            displacement: DisplacementMode::default(),
        })
    }
}

/// Violation counts; every field but the tallies should be zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AlgebraReport {
    pub realizations: u64,
    pub cells: u64,
    pub bad_cells: u64,
    pub bad_ancestry_cells: u64,
    pub a_above_e: u64,
    pub k_not_in_kprime: u64,
    pub pruned_mismatch: u64,
    pub dext_above_d: u64,
    pub dbase_below_parent: u64,
}

impl AlgebraReport {
    pub fn clean(&self) -> bool {
        self.realizations > 0
            && self.a_above_e == 0
            && self.k_not_in_kprime == 0
            && self.pruned_mismatch == 0
            && self.dext_above_d == 0
            && self.dbase_below_parent == 0
    }
}

/// Runs the algebra checks on one realization and adds the outcome to `rep`.
pub fn check_realization(cfg: &AlgebraConfig, lambda: f64, mode: EventMode, seed: u64, rep: &mut AlgebraReport) -> Result<()> {
    let mut p = cfg.params.clone();
    p.lambda = lambda;
    let w = &cfg.window;
    let (sim, traj) = realize_for(&p, w, ClusterUse::A, mode, cfg.substeps, seed)?;
    let grid = IndicatorGrid::new(&p, &traj, mode, cfg.displacement, w.clone(), domain_of(&sim))?;
    rep.realizations += 1;
    let unpruned = grid.sweep_a(w, false)?;
    let pruned = grid.sweep_a(w, true)?;
    rep.pruned_mismatch += unpruned.iter().zip(&pruned).filter(|(a, b)| a != b).count() as u64;
    let mut seen_parents = BTreeSet::new();
    for (c, a) in &unpruned {
        rep.cells += 1;
        let e = grid.indicator_e(c)?;
        rep.bad_cells += u64::from(!e);
        rep.bad_ancestry_cells += u64::from(!a);
        rep.a_above_e += u64::from(*a && !e);
        for k in 1..=p.kappa {
            let anc = grid.ancestor(c, k)?;
            if k > 1 && !seen_parents.insert(anc.clone()) {
                continue;
            }
            let dn = grid.density_indicators(&anc)?;
            rep.dext_above_d += u64::from(dn.dext && !dn.d);
            if let Some(base) = dn.dbase {
                let parent = Cell::new(k + 1, p.pi(k, 1, &anc.i)?, p.gamma(k, 1, anc.tau)?);
                rep.dbase_below_parent += u64::from(grid.dext(&parent)? && !base);
            }
        }
        if !e {
            let kc = bad_cluster(&grid, c, ClusterUse::E)?;
            let kp = bad_cluster(&grid, c, ClusterUse::A)?;
            let kp: BTreeSet<&Cell> = kp.cells.iter().collect();
            rep.k_not_in_kprime += kc.cells.iter().filter(|x| !kp.contains(x)).count() as u64;
        }
    }
    Ok(())
}

/// Checks `replicas` realizations one after another (each holds a long trajectory).
pub fn algebra_suite(cfg: &AlgebraConfig, replicas: u64, seed: u64) -> Result<AlgebraReport> {
    let mut rep = AlgebraReport::default();
    for r in 0..replicas {
        let lambda = cfg.lambdas[r as usize % cfg.lambdas.len()];
        let mode = if r % 2 == 0 { EventMode::Count } else { EventMode::Detect };
        check_realization(cfg, lambda, mode, replica_seed(seed, r), &mut rep)?;
    }
    Ok(rep)
}
