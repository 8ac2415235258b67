use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{ConfinedEndpoint, CouplingParams, SharedMove};
use crate::error::{invalid, Error, Result};
use crate::mobility::{sample_ppp, DEFAULT_POINT_CAP};
use crate::rng::{mix, replica_seed, stream, tag};
use crate::stats::{correlation, dispersion, mean_estimate, Estimate};

const RESIDUAL_CAP: u64 = 1_000_000;

/// Step at which a coupling run gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedStep {
    /// Some subcube holds fewer than `beta ell^d` nodes of `Phi_0`.
    Hypothesis,
    /// Some subcube holds more nodes of `Xi_0` than of `Phi_0`.
    Domination,
}

/// Step outcomes and counts of one coupling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub seed: u64,
    pub subcubes: usize,
    pub phi0_nodes: usize,
    pub min_phi0_per_subcube: usize,
    pub required_per_subcube: f64,
    pub xi0_nodes: usize,
    pub failed_step: Option<FailedStep>,
    pub failed_subcube: Option<Vec<usize>>,
    pub paired: usize,
    /// Pairs that received the shared displacement.
    pub moved_together: usize,
    pub psi: f64,
    pub keep_prob: f64,
    /// Shared-move nodes landing in the inner cube before the last thinning.
    pub in_inner: usize,
    pub final_nodes: usize,
    /// Points where `g` exceeded the exact confined density (zero when the coupling is exact).
    pub density_violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupleOutcome {
    /// Nodes of `Xi` on the inner cube, flat coordinates.
    pub xi: Vec<f64>,
    /// Every node of `Phi_0` after its confined move, in input order.
    pub phi_delta: Vec<f64>,
    pub success: bool,
    pub transcript: Transcript,
}

struct Prepared {
    n_axis: usize,
    psi: f64,
    keep: f64,
    shared: SharedMove,
    confined: ConfinedEndpoint,
}

fn prepare(p: &CouplingParams) -> Result<Prepared> {
    p.validate()?;
    let shared = SharedMove {
        lemma: p.lemma(),
        r: p.k_outer - p.k_inner,
    };
    let psi = shared.mass();
    let keep = (1.0 - p.eps) / ((1.0 - p.eps / 2.0) * psi);
    if !(psi > 0.0) || keep > 1.0 {
        return Err(Error::Precondition(format!(
            "shared mass psi = {psi} is below (1-eps)/(1-eps/2) = {}",
            (1.0 - p.eps) / (1.0 - p.eps / 2.0)
        )));
    }
    Ok(Prepared {
        n_axis: p.subcubes_per_axis()?,
        psi,
        keep,
        shared,
        confined: ConfinedEndpoint::new(p.d, p.delta, p.confinement_side())?,
    })
}

fn subcube_of(p: &CouplingParams, n_axis: usize, x: &[f64]) -> Option<usize> {
    let mut idx = 0;
    for &v in x {
        let t = ((v + 0.5 * p.k_outer) / p.ell).floor();
        if !(t >= 0.0 && t < n_axis as f64) {
            return None;
        }
        idx = idx * n_axis + t as usize;
    }
    Some(idx)
}

fn unflatten(mut idx: usize, n_axis: usize, d: usize) -> Vec<usize> {
    let mut out = vec![0; d];
    for a in (0..d).rev() {
        out[a] = idx % n_axis;
        idx /= n_axis;
    }
    out
}

fn inside(x: &[f64], side: f64) -> bool {
    x.iter().all(|v| v.abs() <= 0.5 * side)
}

/// Couples `phi0` (flat coordinates) with a Poisson process of intensity
/// `(1 - eps) beta` on the inner cube.
pub fn couple(phi0: &[f64], p: &CouplingParams, seed: u64) -> Result<CoupleOutcome> {
    let prep = prepare(p)?;
    run(&prep, phi0, p, seed)
}

fn run(prep: &Prepared, phi0: &[f64], p: &CouplingParams, seed: u64) -> Result<CoupleOutcome> {
    let d = p.d;
    if !phi0.len().is_multiple_of(d) {
        return Err(Error::Geometry("flat point list length is not a multiple of d".into()));
    }
    let n = phi0.len() / d;
    let cells = prep.n_axis.pow(d as u32);
    let required = p.beta * p.ell.powi(d as i32);
    let mut phi_cells: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for v in 0..n {
        if let Some(c) = subcube_of(p, prep.n_axis, &phi0[v * d..(v + 1) * d]) {
            phi_cells[c].push(v);
        }
    }
    let mut tr = Transcript {
        seed,
        subcubes: cells,
        phi0_nodes: n,
        min_phi0_per_subcube: phi_cells.iter().map(Vec::len).min().unwrap_or(0),
        required_per_subcube: required,
        xi0_nodes: 0,
        failed_step: None,
        failed_subcube: None,
        paired: 0,
        moved_together: 0,
        psi: prep.psi,
        keep_prob: prep.keep,
        in_inner: 0,
        final_nodes: 0,
        density_violations: 0,
    };

    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut xi0 = Vec::new();
    if let Some(c) = phi_cells.iter().position(|v| (v.len() as f64) < required - 1e-9) {
        tr.failed_step = Some(FailedStep::Hypothesis);
        tr.failed_subcube = Some(unflatten(c, prep.n_axis, d));
    } else {
        let lo = vec![-0.5 * p.k_outer; d];
        let hi = vec![0.5 * p.k_outer; d];
        xi0 = sample_ppp(&lo, &hi, (1.0 - p.eps / 2.0) * p.beta, mix(seed, &[tag::COUPLE, 0]), 0, DEFAULT_POINT_CAP)?;
        tr.xi0_nodes = xi0.len() / d;
        let mut xi_cells: Vec<Vec<usize>> = vec![Vec::new(); cells];
        for j in 0..tr.xi0_nodes {
            if let Some(c) = subcube_of(p, prep.n_axis, &xi0[j * d..(j + 1) * d]) {
                xi_cells[c].push(j);
            }
        }
        if let Some(c) = (0..cells).find(|&c| xi_cells[c].len() > phi_cells[c].len()) {
            tr.failed_step = Some(FailedStep::Domination);
            tr.failed_subcube = Some(unflatten(c, prep.n_axis, d));
        } else {
            for c in 0..cells {
                for (&j, &v) in xi_cells[c].iter().zip(&phi_cells[c]) {
                    partner[v] = Some(j);
                }
            }
            tr.paired = tr.xi0_nodes;
        }
    }

    let mut rng = stream(seed, &[tag::COUPLE, 1]);
    let mut phi_delta = vec![0.0; n * d];
    let mut shared_nodes = Vec::new();
    let mut w = vec![0.0; d];
    let mut rel = vec![0.0; d];
    for v in 0..n {
        let y = &phi0[v * d..(v + 1) * d];
        let out = &mut phi_delta[v * d..(v + 1) * d];
        match partner[v] {
            None => {
                prep.confined.sample(&mut rng, &mut w)?;
                for a in 0..d {
                    out[a] = y[a] + w[a];
                }
            }
            Some(j) => {
                let yp = &xi0[j * d..(j + 1) * d];
                if rng.random::<f64>() < prep.psi {
                    prep.shared.sample(&mut rng, &mut rel)?;
                    for a in 0..d {
                        out[a] = yp[a] + rel[a];
                        w[a] = out[a] - y[a];
                    }
                    if prep.shared.density(&rel) > prep.confined.density(&w) {
                        tr.density_violations += 1;
                    }
                    tr.moved_together += 1;
                    shared_nodes.push(v);
                } else {
                    let mut accepted = false;
                    for _ in 0..RESIDUAL_CAP {
                        prep.confined.sample(&mut rng, &mut w)?;
                        for a in 0..d {
                            out[a] = y[a] + w[a];
                            rel[a] = out[a] - yp[a];
                        }
                        let ratio = prep.shared.density(&rel) / prep.confined.density(&w);
                        if ratio > 1.0 {
                            tr.density_violations += 1;
                        }
                        if rng.random::<f64>() >= ratio {
                            accepted = true;
                            break;
                        }
                    }
                    if !accepted {
                        return Err(Error::RejectionCap {
                            attempts: RESIDUAL_CAP,
                            rate: 1.0 - prep.psi,
                        });
                    }
                }
            }
        }
    }

    let mut xi = Vec::new();
    if tr.failed_step.is_none() {
        let mut thin = stream(seed, &[tag::THIN]);
        for &v in &shared_nodes {
            let z = &phi_delta[v * d..(v + 1) * d];
            if inside(z, p.k_inner) {
                tr.in_inner += 1;
                if thin.random::<f64>() < prep.keep {
                    xi.extend_from_slice(z);
                }
            }
        }
        tr.final_nodes = xi.len() / d;
    }
    Ok(CoupleOutcome {
        xi,
        phi_delta,
        success: tr.failed_step.is_none(),
        transcript: tr,
    })
}

/// `per_subcube` uniform nodes in every subcube of the outer cube.
pub fn uniform_fixture(p: &CouplingParams, per_subcube: usize, seed: u64) -> Result<Vec<f64>> {
    let n_axis = p.subcubes_per_axis()?;
    let cells = n_axis.pow(p.d as u32);
    let mut rng = stream(seed, &[tag::FIXTURE]);
    let mut out = Vec::with_capacity(cells * per_subcube * p.d);
    for c in 0..cells {
        let idx = unflatten(c, n_axis, p.d);
        for _ in 0..per_subcube {
            for &i in &idx {
                let lo = -0.5 * p.k_outer + i as f64 * p.ell;
                out.push(lo + p.ell * rng.random::<f64>());
            }
        }
    }
    Ok(out)
}

fn subset_ok(xi: &[f64], phi_delta: &[f64], d: usize, k_inner: f64) -> bool {
    let key = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let phi: HashSet<Vec<u64>> = phi_delta.chunks_exact(d).filter(|z| inside(z, k_inner)).map(key).collect();
    xi.chunks_exact(d).all(|z| phi.contains(&key(z)))
}

fn bin_counts(points: &[f64], d: usize, side: f64, per_axis: usize) -> Vec<f64> {
    let mut counts = vec![0.0; per_axis.pow(d as u32)];
    for z in points.chunks_exact(d) {
        let mut idx = 0;
        let mut ok = true;
        for &v in z {
            let t = ((v + 0.5 * side) / side * per_axis as f64).floor();
            if !(t >= 0.0 && t < per_axis as f64) {
                ok = false;
                break;
            }
            idx = idx * per_axis + t as usize;
        }
        if ok {
            counts[idx] += 1.0;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaRow {
    pub replica: u64,
    pub seed: u64,
    pub success: bool,
    pub failed_step: Option<FailedStep>,
    pub xi0_nodes: usize,
    pub moved_together: usize,
    pub final_nodes: usize,
    pub subset_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub phi0_per_subcube: usize,
    pub psi: f64,
    pub keep_prob: f64,
    pub success: Estimate,
    /// Successful runs where some `Xi` node is not a node of `Phi_delta` in the inner cube.
    pub subset_violations: u64,
    pub density_violations: u64,
    pub xi_count: Estimate,
    pub expected_count: f64,
    pub dispersion: f64,
    /// Two-sided chi-square p-value of the dispersion statistic.
    pub dispersion_pvalue: f64,
    /// Pooled correlation of binned `Phi_0` and `Xi` counts over successful runs.
    pub independence_corr: f64,
    pub rows: Vec<ReplicaRow>,
}

/// Replicated coupling on the outer cube, `ceil(beta ell^d)` uniform nodes per subcube.
pub fn couple_grid_experiment(p: &CouplingParams, replicas: u64, seed: u64) -> Result<GridReport> {
    if replicas == 0 {
        return Err(invalid("replicas", "need at least one replica"));
    }
    p.check_grid()?;
    let prep = prepare(p)?;
    let d = p.d;
    let per = (p.beta * p.ell.powi(d as i32) - 1e-9).ceil().max(0.0) as usize;
    let bins = if d == 1 { ((2.0 * p.k_inner / p.ell).round() as usize).max(2) } else { 4 };
    let runs: Vec<(ReplicaRow, Vec<f64>, Vec<f64>, u64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, r);
            let phi0 = uniform_fixture(p, per, mix(s, &[tag::FIXTURE]))?;
            let out = run(&prep, &phi0, p, s)?;
            let row = ReplicaRow {
                replica: r,
                seed: s,
                success: out.success,
                failed_step: out.transcript.failed_step,
                xi0_nodes: out.transcript.xi0_nodes,
                moved_together: out.transcript.moved_together,
                final_nodes: out.transcript.final_nodes,
                subset_ok: !out.success || subset_ok(&out.xi, &out.phi_delta, d, p.k_inner),
            };
            Ok((
                row,
                bin_counts(&phi0, d, p.k_inner, bins),
                bin_counts(&out.xi, d, p.k_inner, bins),
                out.transcript.density_violations,
            ))
        })
        .collect::<Result<_>>()?;
    let successes = runs.iter().filter(|r| r.0.success).count() as u64;
    let counts: Vec<f64> = runs.iter().filter(|r| r.0.success).map(|r| r.0.final_nodes as f64).collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for r in runs.iter().filter(|r| r.0.success) {
        a.extend_from_slice(&r.1);
        b.extend_from_slice(&r.2);
    }
    let disp = dispersion(&counts);
    let pvalue = if counts.len() >= 2 && disp.is_finite() {
        let dof = (counts.len() - 1) as f64;
        let chi = ChiSquared::new(dof).map_err(|e| Error::Range(e.to_string()))?;
        let c = chi.cdf(dof * disp);
        2.0 * c.min(1.0 - c)
    } else {
        f64::NAN
    };
    Ok(GridReport {
        phi0_per_subcube: per,
        psi: prep.psi,
        keep_prob: prep.keep,
        success: Estimate::proportion("coupling_success", successes, replicas),
        subset_violations: runs.iter().filter(|r| !r.0.subset_ok).count() as u64,
        density_violations: runs.iter().map(|r| r.3).sum(),
        xi_count: mean_estimate("xi_count", &counts),
        expected_count: (1.0 - p.eps) * p.beta * p.k_inner.powi(d as i32),
        dispersion: disp,
        dispersion_pvalue: pvalue,
        independence_corr: correlation(&a, &b),
        rows: runs.into_iter().map(|r| r.0).collect(),
    })
}
