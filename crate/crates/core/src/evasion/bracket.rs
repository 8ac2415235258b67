use rayon::prelude::*;
use serde::Serialize;

use super::{
    classify_cells, detection_certificate, evasion_certificate, replay_witness, EvasionConfig, EvasionMode, Verdict,
};
use crate::error::{invalid, Result};
use crate::mobility::TrajectorySet;
use crate::rng::replica_seed;
use crate::stats::Estimate;

/// First detection of a target sitting at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticOutcome {
    /// Earliest sub-step time with a node within `r`; `None` if it survived.
    pub detected_at: Option<f64>,
    /// The detecting node was within `delta_safe` of the ball boundary.
    pub uncertain: bool,
    /// No node came within `r + delta_safe` at any sub-step.
    pub certain_survival: bool,
}

/// Scans the sub-steps of slices `0..slices` for a node within `r` of the origin.
pub fn static_detection(traj: &TrajectorySet, r: f64, delta_safe: f64, slices: usize) -> Result<StaticOutcome> {
    let d = traj.d();
    let s = traj.substeps();
    let mut out = StaticOutcome {
        detected_at: None,
        uncertain: false,
        certain_survival: true,
    };
    for tau in 0..slices as i64 {
        for j in 0..=s {
            if j == 0 && tau > 0 {
                continue;
            }
            let pts = traj.positions_at_step(tau, j)?;
            let nearest = pts
                .chunks_exact(d)
                .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            if nearest <= r + delta_safe {
                out.certain_survival = false;
            }
            if nearest <= r {
                out.detected_at = Some((tau as f64 + j as f64 / s as f64) * traj.beta());
                out.uncertain = nearest > r - delta_safe;
                return Ok(out);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRow {
    pub replica: u64,
    pub seed: u64,
    pub detection: Verdict,
    pub evasion: Verdict,
    pub death_slice: Option<usize>,
    pub path_length: Option<usize>,
    /// Replay of the evasion witness against the sub-step positions; `None` without a witness.
    pub replay_ok: Option<bool>,
    pub static_detected_at: Option<f64>,
    pub static_certain_survival: bool,
    pub blocked_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketReport {
    /// Fraction of replicas with an evasion witness (closure mode).
    pub low: Estimate,
    /// Fraction of replicas without a detection certificate.
    pub up: Estimate,
    pub static_survival: Estimate,
    pub static_certain_survival: Estimate,
    pub blocked_fraction: Estimate,
    /// Replicas holding both a detection and an evasion certificate.
    pub exclusivity_violations: u64,
    pub replay_failures: u64,
    pub rows: Vec<VerdictRow>,
}

/// Brackets the probability that the target survives `t_slices` slices.
pub fn rho_bracket(cfg: &EvasionConfig, replicas: u64, seed: u64) -> Result<BracketReport> {
    if replicas == 0 {
        return Err(invalid("replicas", "need at least one replica"));
    }
    cfg.validate()?;
    let rows: Vec<VerdictRow> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let s = replica_seed(seed, k);
            let traj = cfg.realize(s)?;
            let field = classify_cells(&traj, cfg)?;
            let det = detection_certificate(&field);
            let ev = evasion_certificate(&field, EvasionMode::Closure);
            let replay_ok = match &ev.witness {
                Some(w) => Some(replay_witness(&traj, w, cfg.params.r, cfg.t_slices, None)?),
                None => None,
            };
            let st = static_detection(&traj, cfg.params.r, cfg.delta_safe(), cfg.t_slices)?;
            Ok(VerdictRow {
                replica: k,
                seed: s,
                detection: det.verdict,
                evasion: ev.verdict,
                death_slice: det.death_slice,
                path_length: ev.path_length(),
                replay_ok,
                static_detected_at: st.detected_at,
                static_certain_survival: st.certain_survival,
                blocked_fraction: field.blocked_fraction(),
            })
        })
        .collect::<Result<_>>()?;
    let count = |f: &dyn Fn(&VerdictRow) -> bool| rows.iter().filter(|r| f(r)).count() as u64;
    let bf: Vec<f64> = rows.iter().map(|r| r.blocked_fraction).collect();
    Ok(BracketReport {
        low: Estimate::proportion("rho_low", count(&|r| r.evasion == Verdict::EvasionPossible), replicas),
        up: Estimate::proportion("rho_up", count(&|r| r.detection != Verdict::DetectionCertain), replicas),
        static_survival: Estimate::proportion("static_survival", count(&|r| r.static_detected_at.is_none()), replicas),
        static_certain_survival: Estimate::proportion(
            "static_certain_survival",
            count(&|r| r.static_certain_survival),
            replicas,
        ),
        blocked_fraction: crate::stats::mean_estimate("blocked_fraction", &bf),
        exclusivity_violations: count(&|r| {
            r.detection == Verdict::DetectionCertain && r.evasion == Verdict::EvasionPossible
        }),
        replay_failures: count(&|r| r.replay_ok == Some(false)),
        rows,
    })
}
