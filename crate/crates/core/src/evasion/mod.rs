//! Blocked/vacant cell fields, detection and evasion certificates for a target
//! starting at the origin, and brackets on its survival probability.

mod bracket;
mod certificate;

pub use bracket::{rho_bracket, static_detection, BracketReport, StaticOutcome, VerdictRow};
pub use certificate::{detection_certificate, evasion_certificate, replay_witness, Certificate, EvasionMode, Verdict, Witness};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mobility::{DisplacementMode, SimConfig, SpatialIndex, TrajectorySet};
use crate::tessellation::ScaleParams;

/// Scale-1 tessellation with `ell = r / (2 sqrt d)` and `w = 1`, observed over
/// `t_slices` slices on the cells `[-half_cells, half_cells]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionConfig {
    pub params: ScaleParams,
    pub s: usize,
    pub t_slices: usize,
    pub half_cells: i64,
    /// Margin around detection balls for vacant cells; `None` means `3 sqrt(beta / s)`.
    #[serde(default)]
    pub delta_safe: Option<f64>,
    /// Shrink of the blocked window in sub-step standard deviations.
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_q() -> f64 {
    3.0
}

impl EvasionConfig {
    /// Planar fixture with `r = 1`: `m = 28`, `eps = 0.5`, `c_mix = 1`, 32 sub-steps, 10 slices.
    pub fn desk(lambda: f64) -> Result<Self> {
        let ell = 1.0 / (2.0 * 2f64.sqrt());
        let params = ScaleParams::new(2, 28, 1, 0.5, ell, 1.0)?.with_lambda(lambda)?.with_r(1.0)?;
        Ok(EvasionConfig {
            params,
            s: 32,
            t_slices: 10,
            half_cells: 16,
            delta_safe: None,
            q: 3.0,
        })
    }

    pub fn delta_safe(&self) -> f64 {
        self.delta_safe
            .unwrap_or(3.0 * (self.params.beta / self.s as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        p.validate()?;
        let want = p.r / (2.0 * (p.d as f64).sqrt());
        if (p.ell - want).abs() > 1e-9 * want.max(1e-300) {
            return Err(invalid("ell", format!("blocking needs ell = r/(2 sqrt d) = {want}, got {}", p.ell)));
        }
        if p.w != 1.0 {
            return Err(invalid("w", "blocking uses w = 1"));
        }
        if self.s == 0 || self.t_slices == 0 || self.half_cells < 0 {
            return Err(invalid("t_slices", "need s >= 1, t_slices >= 1 and half_cells >= 0"));
        }
        if !(self.delta_safe() >= 0.0) || !(self.q >= 0.0) {
            return Err(invalid("delta_safe", "margins must be non-negative"));
        }
        Ok(())
    }

    /// Padded simulation covering the cell window, with sub-step paths kept.
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let p = &self.params;
        let mut c = SimConfig::new(
            p.d,
            p.lambda,
            p.r,
            (self.half_cells + 1) as f64 * p.ell,
            p.beta,
            self.t_slices,
            self.s,
            seed,
        );
        c.store_path = true;
        c
    }

    pub fn realize(&self, seed: u64) -> Result<TrajectorySet> {
        self.validate()?;
        self.sim_config(seed).realize()
    }
}

/// Per-slice blocked and vacant cells of the window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceField {
    pub d: usize,
    pub ell: f64,
    pub beta: f64,
    pub s: usize,
    pub r: f64,
    pub delta_safe: f64,
    pub half_cells: i64,
    pub slices: usize,
    /// `blocked[tau][cell]`: some node starts in the cube and stays within `ell/2` over the slice.
    pub blocked: Vec<Vec<bool>>,
    /// `vacant[tau][cell]`: no node within `r + delta_safe` of the closed cube at any sub-step.
    pub vacant: Vec<Vec<bool>>,
    /// `origin_clear[tau]`: no node within `r + delta_safe` of the origin at any sub-step.
    pub origin_clear: Vec<bool>,
    /// Some node within `r` of the origin at time 0.
    pub origin_covered_at_start: bool,
}

impl SliceField {
    pub fn side(&self) -> usize {
        (2 * self.half_cells + 1) as usize
    }

    pub fn cells(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn index(&self, i: &[i64]) -> Option<usize> {
        let mut k = 0;
        for &v in i {
            if v.abs() > self.half_cells {
                return None;
            }
            k = k * self.side() + (v + self.half_cells) as usize;
        }
        Some(k)
    }

    pub fn cell(&self, mut k: usize) -> Vec<i64> {
        let side = self.side();
        let mut i = vec![0; self.d];
        for a in (0..self.d).rev() {
            i[a] = (k % side) as i64 - self.half_cells;
            k /= side;
        }
        i
    }

    pub fn on_edge(&self, k: usize) -> bool {
        self.cell(k).iter().any(|v| v.abs() == self.half_cells)
    }

    /// Cells sharing at least a corner with `k`, inside the window.
    pub fn neighbours(&self, k: usize) -> Vec<usize> {
        let c = self.cell(k);
        let total = 3usize.pow(self.d as u32);
        let mut out = Vec::with_capacity(total - 1);
        for code in 0..total {
            let mut x = code;
            let mut i = c.clone();
            for v in i.iter_mut() {
                *v += (x % 3) as i64 - 1;
                x /= 3;
            }
            if i != c {
                if let Some(j) = self.index(&i) {
                    out.push(j);
                }
            }
        }
        out
    }

    /// Cells whose closed cube contains the origin.
    pub fn origin_cells(&self) -> Vec<usize> {
        (0..1usize << self.d)
            .filter_map(|mask| {
                let i: Vec<i64> = (0..self.d).map(|a| -((mask >> a & 1) as i64)).collect();
                self.index(&i)
            })
            .collect()
    }

    pub fn centre(&self, k: usize) -> Vec<f64> {
        self.cell(k).iter().map(|&v| (v as f64 + 0.5) * self.ell).collect()
    }

    pub fn blocked_fraction(&self) -> f64 {
        let total: usize = self.blocked.iter().map(|b| b.iter().filter(|&&x| x).count()).sum();
        total as f64 / (self.cells() * self.slices) as f64
    }
}

/// Classifies every cell of the window for the slices `0..t_slices`.
pub fn classify_cells(traj: &TrajectorySet, cfg: &EvasionConfig) -> Result<SliceField> {
    classify_cells_masked(traj, cfg, None)
}

/// Same as [`classify_cells`] using only the nodes with `mask[v]`.
pub fn classify_cells_masked(traj: &TrajectorySet, cfg: &EvasionConfig, mask: Option<&[bool]>) -> Result<SliceField> {
    cfg.validate()?;
    let p = &cfg.params;
    let d = p.d;
    if traj.d() != d || (traj.beta() - p.beta).abs() > 1e-12 * p.beta || traj.substeps() != cfg.s {
        return Err(Error::Geometry("trajectory does not match the evasion configuration".into()));
    }
    if !traj.has_path() {
        return Err(invalid("store_path", "vacancy needs the sub-step paths"));
    }
    traj.check_slice(0)?;
    traj.check_slice(cfg.t_slices as i64)?;
    if let Some(m) = mask {
        if m.len() != traj.n() {
            return Err(invalid("mask", "one flag per node"));
        }
    }
    let active = |v: usize| mask.is_none_or(|m| m[v]);
    let delta = cfg.delta_safe();
    let mut field = SliceField {
        d,
        ell: p.ell,
        beta: p.beta,
        s: cfg.s,
        r: p.r,
        delta_safe: delta,
        half_cells: cfg.half_cells,
        slices: cfg.t_slices,
        blocked: Vec::new(),
        vacant: Vec::new(),
        origin_clear: Vec::new(),
        origin_covered_at_start: false,
    };
    let cells = field.cells();
    let torus = traj.torus().map(|(a, b)| (a.as_slice(), b.as_slice()));
    let origin = vec![0.0; d];
    let mode = DisplacementMode::Conservative { q: cfg.q };
    for tau in 0..cfg.t_slices as i64 {
        let mut blocked = vec![false; cells];
        let start = traj.positions_at_slice(tau)?;
        for v in (0..traj.n()).filter(|&v| active(v)) {
            let i: Vec<i64> = start[v * d..(v + 1) * d].iter().map(|x| (x / p.ell).floor() as i64).collect();
            if let Some(k) = field.index(&i) {
                if !blocked[k] && traj.displacement_in(v, tau as f64 * p.beta, (tau + 1) as f64 * p.beta, p.ell, mode)? {
                    blocked[k] = true;
                }
            }
        }
        let mut vacant = vec![true; cells];
        let mut clear = true;
        for j in 0..=cfg.s {
            let all = traj.positions_at_step(tau, j)?;
            let pts: Vec<f64> = match mask {
                None => all,
                Some(_) => all
                    .chunks_exact(d)
                    .enumerate()
                    .filter(|(v, _)| active(*v))
                    .flat_map(|(_, x)| x.iter().copied())
                    .collect(),
            };
            let idx = SpatialIndex::build(d, &pts, p.r + delta, torus)?;
            if tau == 0 && j == 0 {
                field.origin_covered_at_start = idx.covered(&origin, p.r);
            }
            clear &= !idx.covered(&origin, p.r + delta);
            for (k, vac) in vacant.iter_mut().enumerate() {
                if *vac {
                    let lo: Vec<f64> = field.cell(k).iter().map(|&v| v as f64 * p.ell).collect();
                    let hi: Vec<f64> = lo.iter().map(|x| x + p.ell).collect();
                    *vac = !idx.any_near_box(&lo, &hi, p.r + delta);
                }
            }
        }
        field.blocked.push(blocked);
        field.vacant.push(vacant);
        field.origin_clear.push(clear);
    }
    Ok(field)
}
