//! Cell indicator processes, bad clusters and escape estimates on a realization.

mod cluster;
mod grid;
pub mod suite;

pub use cluster::{bad_cluster, escape_probability, ClusterResult, EscapeConfig};
pub use grid::{ancestry_product, cells_of, Density, IndicatorGrid};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mobility::{SimConfig, TrajectorySet, DEFAULT_POINT_CAP};
use crate::tessellation::{region, time_region, CellWindow, ScaleParams, SpaceKind, TimeKind};

/// Which scale-1 event plays the role of `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EventMode {
    /// At least `(1-eps) lambda ell^d` nodes in the cube at the start of the slice.
    #[default]
    Count,
    /// Some node in the cube whose displacement over the slice stays in `Q_{w ell}`.
    Detect,
}

/// Indicator used to grow a cluster: `E` gives `K`, `A` gives `K'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClusterUse {
    #[default]
    E,
    A,
}

/// Real-space box and slice range a grid needs to be evaluated without horizon errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Extent {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub first_slice: i64,
    pub last_slice: i64,
}

impl Extent {
    fn add_box(&mut self, lo: &[f64], hi: &[f64]) {
        for a in 0..lo.len() {
            self.lo[a] = self.lo[a].min(lo[a]);
            self.hi[a] = self.hi[a].max(hi[a]);
        }
    }

    fn add_time(&mut self, a: i128, b: i128) -> Result<()> {
        let cast = |x: i128| i64::try_from(x).map_err(|_| Error::Range(format!("slice index {x} out of range")));
        self.first_slice = self.first_slice.min(cast(a)?);
        self.last_slice = self.last_slice.max(cast(b)?);
        Ok(())
    }
}

fn corners(w: &CellWindow) -> Vec<(Vec<i64>, i64)> {
    let d = w.space.len();
    let mut out = Vec::with_capacity(1 << (d + 1));
    for mask in 0..(1usize << (d + 1)) {
        let i = (0..d)
            .map(|a| if mask >> a & 1 == 0 { w.space[a].0 } else { w.space[a].1 })
            .collect();
        let t = if mask >> d & 1 == 0 { w.time.0 } else { w.time.1 };
        out.push((i, t));
    }
    out
}

/// Ancestor window at scale `k` of a scale-1 window (both maps are monotone).
pub fn ancestor_window(p: &ScaleParams, w: &CellWindow, k: usize) -> Result<CellWindow> {
    let d = w.space.len();
    let space = (0..d)
        .map(|a| Ok((p.pi_1d(1, k - 1, w.space[a].0)?, p.pi_1d(1, k - 1, w.space[a].1)?)))
        .collect::<Result<_>>()?;
    Ok(CellWindow {
        k,
        space,
        time: (p.gamma(1, k - 1, w.time.0)?, p.gamma(1, k - 1, w.time.1)?),
    })
}

/// Space and time needed to evaluate `use_` on every cell of the scale-1
/// window `w` and on its one-cell neighbourhood.
pub fn required_extent(p: &ScaleParams, w: &CellWindow, use_: ClusterUse, mode: EventMode) -> Result<Extent> {
    if w.k != 1 || w.space.len() != p.d || w.is_empty() {
        return Err(Error::Geometry("cluster windows are non-empty scale-1 windows".into()));
    }
    let g = w.grow(1);
    let mut ext = Extent {
        lo: vec![f64::INFINITY; p.d],
        hi: vec![f64::NEG_INFINITY; p.d],
        first_slice: i64::MAX,
        last_slice: i64::MIN,
    };
    for (i, t) in corners(&g) {
        let (lo, hi) = region(p, 1, &i, SpaceKind::Cube)?.to_real(p);
        ext.add_box(&lo, &hi);
        let span = time_region(p, 1, t, TimeKind::Interval)?;
        ext.add_time(span.lo, span.hi.max(span.lo + i128::from(mode == EventMode::Detect)))?;
    }
    if use_ == ClusterUse::A {
        if p.kappa < 2 {
            return Err(invalid("kappa", "ancestry indicators need at least two scales"));
        }
        for k in 1..=p.kappa {
            let aw = ancestor_window(p, &g, k)?;
            for (i, t) in corners(&aw) {
                if k >= 2 {
                    let (lo, hi) = region(p, k, &i, SpaceKind::Extended)?.to_real(p);
                    ext.add_box(&lo, &hi);
                    let b = p.beta_units(k)?;
                    ext.add_time(t as i128 * b, (t as i128 + 2) * b)?;
                }
                if k < p.kappa {
                    let (lo, hi) = region(p, k, &i, SpaceKind::Base)?.to_real(p);
                    ext.add_box(&lo, &hi);
                    let up = p.gamma(k, 1, t)? as i128 * p.beta_units(k + 1)?;
                    ext.add_time(up, t as i128 * p.beta_units(k)?)?;
                }
            }
        }
    }
    Ok(ext)
}

/// Simulation settings covering `extent` with a symmetric padded box.
pub fn sim_config_for(p: &ScaleParams, extent: &Extent, s: usize, seed: u64) -> Result<SimConfig> {
    let half = extent
        .lo
        .iter()
        .chain(&extent.hi)
        .fold(0f64, |m, x| m.max(x.abs()))
        * (1.0 + 1e-12);
    let slices = (extent.last_slice - extent.first_slice).max(1) as usize;
    let mut cfg = SimConfig::new(p.d, p.lambda, p.r, half, p.beta, slices, s, seed);
    cfg.start_slice = extent.first_slice;
    let (lo, hi) = cfg.sim_box();
    let nodes = p.lambda * lo.iter().zip(&hi).map(|(a, b)| b - a).product::<f64>();
    // start positions plus two deviation bounds per slice
    let words = nodes * (slices as f64 + 1.0) * 3.0 * p.d as f64;
    if nodes > DEFAULT_POINT_CAP as f64 || words > 3.0e8 {
        return Err(Error::MemoryCap {
            expected: words,
            cap: 300_000_000,
        });
    }
    Ok(cfg)
}

/// Samples a realization on which every indicator of the window can be evaluated.
pub fn realize_for(
    p: &ScaleParams,
    w: &CellWindow,
    use_: ClusterUse,
    mode: EventMode,
    s: usize,
    seed: u64,
) -> Result<(SimConfig, TrajectorySet)> {
    let ext = required_extent(p, w, use_, mode)?;
    let cfg = sim_config_for(p, &ext, s, seed)?;
    let t = cfg.realize()?;
    Ok((cfg, t))
}

/// The trusted region of a padded simulation: its analysed box.
pub fn domain_of(cfg: &SimConfig) -> (Vec<f64>, Vec<f64>) {
    (vec![-cfg.half_width; cfg.d], vec![cfg.half_width; cfg.d])
}
