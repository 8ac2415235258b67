use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{domain_of, realize_for, ClusterUse, EventMode, IndicatorGrid};
use crate::error::{invalid, Result};
use crate::mobility::DisplacementMode;
use crate::rng::replica_seed;
use crate::stats::Estimate;
use crate::tessellation::{Cell, CellWindow, ScaleParams};

/// Bad cluster of a root cell inside the grid window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterResult {
    /// Sorted cells of the cluster inside the window.
    pub cells: Vec<Cell>,
    /// Some cluster cell has a bad neighbour outside the window.
    pub escaped: bool,
    /// Some outside neighbour could not be evaluated and was counted as bad.
    pub truncated: bool,
}

fn neighbours(c: &Cell) -> Vec<Cell> {
    let d = c.i.len();
    let total = 3usize.pow(d as u32 + 1);
    let mut out = Vec::with_capacity(total - 1);
    for code in 0..total {
        let mut x = code;
        let mut i = c.i.clone();
        for v in i.iter_mut() {
            *v += (x % 3) as i64 - 1;
            x /= 3;
        }
        let tau = c.tau + (x % 3) as i64 - 1;
        if tau == c.tau && i == c.i {
            continue;
        }
        out.push(Cell::new(c.k, i, tau));
    }
    out
}

/// Breadth-first search over the `3^(d+1) - 1` neighbours of each bad cell.
pub fn bad_cluster(grid: &IndicatorGrid, root: &Cell, use_: ClusterUse) -> Result<ClusterResult> {
    let w = grid.window();
    if !w.contains(root) {
        return Err(invalid("root", "root cell lies outside the grid window"));
    }
    let mut res = ClusterResult {
        cells: Vec::new(),
        escaped: false,
        truncated: false,
    };
    if !grid.is_bad(root, use_)? {
        return Ok(res);
    }
    let mut seen = BTreeSet::from([root.clone()]);
    let mut queue = VecDeque::from([root.clone()]);
    while let Some(c) = queue.pop_front() {
        for nb in neighbours(&c) {
            if seen.contains(&nb) {
                continue;
            }
            if !w.contains(&nb) {
                if !res.escaped {
                    match grid.is_bad(&nb, use_) {
                        Ok(true) => res.escaped = true,
                        Ok(false) => {}
                        Err(_) => {
                            res.escaped = true;
                            res.truncated = true;
                        }
                    }
                }
                continue;
            }
            if grid.is_bad(&nb, use_)? {
                seen.insert(nb.clone());
                queue.push_back(nb);
            }
        }
    }
    res.cells = seen.into_iter().collect();
    Ok(res)
}

/// Replicated escape experiment: root `(0, 0)` in the window
/// `[-half_cells, half_cells]^d x [0, slices - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeConfig {
    pub params: ScaleParams,
    pub mode: EventMode,
    #[serde(default)]
    pub use_: ClusterUse,
    pub half_cells: i64,
    pub slices: i64,
    pub substeps: usize,
    #[serde(default)]
    pub displacement: DisplacementMode,
}

impl EscapeConfig {
    pub fn window(&self) -> CellWindow {
        CellWindow {
            k: 1,
            space: vec![(-self.half_cells, self.half_cells); self.params.d],
            time: (0, self.slices - 1),
        }
    }

    /// Cluster of the root on one replica.
    pub fn run_one(&self, seed: u64) -> Result<ClusterResult> {
        if self.half_cells < 0 || self.slices < 1 {
            return Err(invalid("window", "need half_cells >= 0 and slices >= 1"));
        }
        let w = self.window();
        let (cfg, traj) = realize_for(&self.params, &w, self.use_, self.mode, self.substeps, seed)?;
        let grid = IndicatorGrid::new(&self.params, &traj, self.mode, self.displacement, w, domain_of(&cfg))?;
        bad_cluster(&grid, &Cell::new(1, vec![0; self.params.d], 0), self.use_)
    }
}

/// Fraction of replicas whose root cluster escapes the window, with a Wilson interval.
pub fn escape_probability(cfg: &EscapeConfig, replicas: u64, seed: u64) -> Result<Estimate> {
    if replicas == 0 {
        return Err(invalid("replicas", "need at least one replica"));
    }
    let escaped: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|r| cfg.run_one(replica_seed(seed, r)).map(|c| c.escaped))
        .collect::<Result<_>>()?;
    let k = escaped.iter().filter(|&&e| e).count() as u64;
    Ok(Estimate::proportion("escape", k, replicas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbour_count() {
        assert_eq!(neighbours(&Cell::new(1, vec![0], 0)).len(), 8);
        assert_eq!(neighbours(&Cell::new(1, vec![0, 0], 3)).len(), 26);
    }
}
