//! The eight experiment commands. Each returns its estimates and checks and
//! writes its CSV tables into the output directory.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use stsim_core::bounds::{verify_grid, BoundKind};
use stsim_core::cellfield::EscapeConfig;
use stsim_core::coupling::{couple_grid_experiment, verify_indistinguishable};
use stsim_core::evasion::{rho_bracket, BracketReport, Verdict, VerdictRow};
use stsim_core::mobility::suite::{confinement_check, measure_preservation, origin_coverage, ppp_independence};
use stsim_core::rng::{mix, replica_seed};
use stsim_core::tessellation::verify::{run_suite, weight_suite, VerifyWindow};
use stsim_core::tessellation::{ln_psi, psi_tilde};
use stsim_core::Estimate;

use crate::config::ExperimentConfig;
use crate::output::{write_csv, Check};
use crate::RunError;

#[derive(Debug, Default)]
pub struct Outcome {
    pub estimates: Vec<Estimate>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }
}

/// Volume of the unit ball, `d <= 3`.
fn unit_ball(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => 4.0 / 3.0 * std::f64::consts::PI,
    }
}

/// Consecutive estimates (by increasing parameter) never rise beyond their intervals.
fn non_increasing(ests: &[Estimate]) -> bool {
    ests.windows(2).all(|w| w[1].ci_low <= w[0].ci_high)
}

pub fn ppp_check(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    let (d, lambda, n) = (cfg.d, cfg.lambda, cfg.replicas);
    let mb = &cfg.mobility;

    let (rep, corr) = ppp_independence(d, lambda, mb.half, n, mix(cfg.seed, &[1]))?;
    out.check("ppp_mean", rep.mean_ok(), format!("mean {} vs {}", rep.mean.value, rep.expected));
    out.check("ppp_dispersion", rep.dispersion_ok(), format!("{}", rep.dispersion));
    let corr_tol = 4.0 / (n as f64).sqrt();
    out.check("ppp_independence", corr.abs() <= corr_tol, format!("corr {corr}, tolerance {corr_tol}"));
    out.estimates.push(rep.mean.clone());
    out.estimates.push(Estimate::exact("ppp_dispersion", rep.dispersion));
    out.estimates.push(Estimate::exact("ppp_half_box_corr", corr));

    let (c0, c1) = measure_preservation(d, lambda, mb.delta, mb.half, n, mix(cfg.seed, &[2]))?;
    for rep in [&c0, &c1] {
        let name = &rep.mean.name;
        out.check(format!("{name}_mean"), rep.mean_ok(), format!("mean {} vs {}", rep.mean.value, rep.expected));
        out.check(format!("{name}_dispersion"), rep.dispersion_ok(), format!("{}", rep.dispersion));
        out.estimates.push(rep.mean.clone());
        out.estimates.push(Estimate::exact(format!("{name}_dispersion"), rep.dispersion));
    }

    let mut grid = Vec::new();
    for &dd in &mb.confinement_dims {
        for &delta in &mb.confinement_deltas {
            for &k in &mb.confinement_ratios {
                grid.push((dd, delta, k));
            }
        }
    }
    let runs = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(dd, delta, k))| {
            confinement_check(dd, delta, k * delta.sqrt(), mb.confinement_n, mb.confinement_s, mix(cfg.seed, &[3, i as u64]))
        })
        .collect::<stsim_core::Result<Vec<_>>>()?;
    for (&(dd, delta, k), (emp, bound)) in grid.iter().zip(runs) {
        let tag = format!("d={dd},delta={delta},ratio={k}");
        let se = (emp.value * (1.0 - emp.value) / emp.n as f64).sqrt();
        out.check(
            format!("confinement[{tag}]"),
            emp.value >= bound - 2.0 * se,
            format!("empirical {} vs bound {bound} (stderr {se})", emp.value),
        );
        out.estimates.push(Estimate { name: format!("confinement[{tag}]"), ..emp });
        out.estimates.push(Estimate::exact(format!("confinement_bound[{tag}]"), bound));
    }

    let cov = origin_coverage(d, lambda, cfg.r, mb.coverage_replicas, mix(cfg.seed, &[4]))?;
    let truth = 1.0 - (-lambda * unit_ball(d) * cfg.r.powi(d as i32)).exp();
    out.check(
        "origin_coverage",
        (cov.value - truth).abs() <= cov.half_width() + 0.02,
        format!("{} vs {truth}", cov.value),
    );
    out.estimates.push(cov);
    out.estimates.push(Estimate::exact("origin_coverage_truth", truth));
    write_csv(dir, "checks.csv", &out.checks)?;
    Ok(out)
}

#[derive(Serialize)]
struct CheckRow<'a> {
    name: &'a str,
    cases: u64,
    failures: u64,
    example: &'a str,
}

pub fn tessellation_verify(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let t = &cfg.tessellation;
    let p = cfg.params()?.with_kappa(t.kmax + 1)?;
    let w = VerifyWindow {
        kmax: t.kmax,
        imax: t.imax,
        tmax: t.tmax,
    };
    let mut checks = run_suite(&p, &w)?;
    checks.extend(weight_suite(&p, t.jmax)?);
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for c in &checks {
        out.check(&c.name, c.passed(), format!("{} failures in {} cases", c.failures, c.cases));
        let f = c.failures as f64;
        out.estimates.push(Estimate::new(format!("failures[{}]", c.name), f, (f, f), c.cases));
        rows.push(CheckRow {
            name: &c.name,
            cases: c.cases,
            failures: c.failures,
            example: c.example.as_deref().unwrap_or(""),
        });
    }
    write_csv(dir, "checks.csv", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct BoundRow {
    name: String,
    inputs: String,
    kind: &'static str,
    bound: f64,
    truth: f64,
    margin: f64,
    holds: bool,
}

pub fn bounds_verify(_cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let reports = verify_grid();
    let mut out = Outcome::default();
    // smallest slack in the valid direction, per bound family
    let mut worst: BTreeMap<String, (f64, bool, usize)> = BTreeMap::new();
    let mut rows = Vec::new();
    for r in &reports {
        let slack = match r.kind {
            BoundKind::UpperBound => r.bound - r.truth,
            BoundKind::LowerBound => r.truth - r.bound,
        };
        let e = worst.entry(r.name.clone()).or_insert((f64::INFINITY, true, 0));
        e.0 = e.0.min(slack);
        e.1 &= r.holds();
        e.2 += 1;
        rows.push(BoundRow {
            name: r.name.clone(),
            inputs: r.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
            kind: match r.kind {
                BoundKind::UpperBound => "upper",
                BoundKind::LowerBound => "lower",
            },
            bound: r.bound,
            truth: r.truth,
            margin: r.margin,
            holds: r.holds(),
        });
    }
    for (name, (slack, holds, n)) in worst {
        out.check(&name, holds, format!("{n} cases, smallest slack {slack:e}"));
        out.estimates.push(Estimate::new(format!("min_slack[{name}]"), slack, (slack, slack), n as u64));
    }
    write_csv(dir, "bounds.csv", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct CouplingRow {
    replica: u64,
    seed: u64,
    success: bool,
    failed_step: String,
    xi0_nodes: usize,
    moved_together: usize,
    final_nodes: usize,
    subset_ok: bool,
}

pub fn coupling_verify(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let block = &cfg.coupling;
    let p = block.params();
    let mut out = Outcome::default();
    let ind = verify_indistinguishable(&p.lemma(), block.pf)?;
    out.check(
        "indistinguishable",
        ind.passes,
        format!("domination margin {:e}, integral margin {:e}", ind.domination_margin, ind.integral_margin),
    );
    out.estimates.push(Estimate::exact("domination_margin", ind.domination_margin));
    out.estimates.push(Estimate::exact("subdensity_integral", ind.integral));

    let rep = couple_grid_experiment(&p, cfg.replicas, cfg.seed)?;
    out.check("subset", rep.subset_violations == 0, format!("{} violations", rep.subset_violations));
    out.check("residual_density", rep.density_violations == 0, format!("{} violations", rep.density_violations));
    out.check(
        "success_rate",
        rep.success.value >= block.min_success,
        format!("{} vs floor {}", rep.success.value, block.min_success),
    );
    let n = rep.xi_count.n as f64;
    let tol = 4.0 * (rep.expected_count / n).sqrt();
    out.check(
        "xi_mean",
        (rep.xi_count.value - rep.expected_count).abs() <= tol,
        format!("{} vs {} (tolerance {tol})", rep.xi_count.value, rep.expected_count),
    );
    out.check(
        "xi_dispersion",
        rep.dispersion_pvalue > 1e-3,
        format!("ratio {}, p-value {}", rep.dispersion, rep.dispersion_pvalue),
    );
    out.estimates.push(rep.success.clone());
    out.estimates.push(rep.xi_count.clone());
    out.estimates.push(Estimate::exact("xi_expected", rep.expected_count));
    out.estimates.push(Estimate::exact("xi_dispersion", rep.dispersion));
    out.estimates.push(Estimate::exact("xi_dispersion_pvalue", rep.dispersion_pvalue));
    out.estimates.push(Estimate::exact("independence_corr", rep.independence_corr));
    out.estimates.push(Estimate::exact("psi", rep.psi));
    out.estimates.push(Estimate::exact("keep_prob", rep.keep_prob));
    let rows: Vec<CouplingRow> = rep
        .rows
        .iter()
        .map(|r| CouplingRow {
            replica: r.replica,
            seed: r.seed,
            success: r.success,
            failed_step: r.failed_step.map(|s| format!("{s:?}")).unwrap_or_default(),
            xi0_nodes: r.xi0_nodes,
            moved_together: r.moved_together,
            final_nodes: r.final_nodes,
            subset_ok: r.subset_ok,
        })
        .collect();
    write_csv(dir, "replicas.csv", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct EscapeRow {
    lambda: f64,
    replica: u64,
    seed: u64,
    escaped: bool,
    truncated: bool,
    cluster_cells: usize,
}

pub fn percolation(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let pb = &cfg.percolation;
    let base = cfg.params()?;
    let mut lambdas = pb.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    let mut ests = Vec::new();
    for &lambda in &lambdas {
        let ec = EscapeConfig {
            params: base.clone().with_lambda(lambda)?,
            mode: pb.mode,
            use_: pb.cluster,
            half_cells: pb.half_cells,
            slices: pb.slices,
            substeps: pb.substeps,
            displacement: pb.displacement,
        };
        let runs = (0..cfg.replicas)
            .into_par_iter()
            .map(|k| {
                let seed = replica_seed(cfg.seed, k);
                ec.run_one(seed).map(|c| EscapeRow {
                    lambda,
                    replica: k,
                    seed,
                    escaped: c.escaped,
                    truncated: c.truncated,
                    cluster_cells: c.cells.len(),
                })
            })
            .collect::<stsim_core::Result<Vec<_>>>()?;
        let esc = runs.iter().filter(|r| r.escaped).count() as u64;
        let trunc = runs.iter().filter(|r| r.truncated).count() as u64;
        ests.push(Estimate::proportion(format!("escape[lambda={lambda}]"), esc, cfg.replicas));
        out.estimates.push(Estimate::proportion(format!("truncated[lambda={lambda}]"), trunc, cfg.replicas));
        rows.extend(runs);
    }
    out.check(
        "escape_non_increasing",
        non_increasing(&ests),
        ests.iter().map(|e| format!("{}={:.3}", e.name, e.value)).collect::<Vec<_>>().join(" "),
    );
    out.estimates.splice(0..0, ests);
    write_csv(dir, "replicas.csv", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct VerdictCsv {
    lambda: f64,
    replica: u64,
    seed: u64,
    detection: Verdict,
    evasion: Verdict,
    death_slice: Option<usize>,
    path_length: Option<usize>,
    replay_ok: Option<bool>,
    static_detected_at: Option<f64>,
    static_certain_survival: bool,
    blocked_fraction: f64,
}

fn verdict_rows(lambda: f64, rows: &[VerdictRow]) -> Vec<VerdictCsv> {
    rows.iter()
        .map(|r| VerdictCsv {
            lambda,
            replica: r.replica,
            seed: r.seed,
            detection: r.detection,
            evasion: r.evasion,
            death_slice: r.death_slice,
            path_length: r.path_length,
            replay_ok: r.replay_ok,
            static_detected_at: r.static_detected_at,
            static_certain_survival: r.static_certain_survival,
            blocked_fraction: r.blocked_fraction,
        })
        .collect()
}

/// Certificate checks shared by `detect` and `phase-scan`.
fn bracket_checks(out: &mut Outcome, tag: &str, rep: &BracketReport) {
    out.check(
        format!("exclusivity{tag}"),
        rep.exclusivity_violations == 0,
        format!("{} replicas with both certificates", rep.exclusivity_violations),
    );
    out.check(
        format!("witness_replay{tag}"),
        rep.replay_failures == 0,
        format!("{} witnesses detected on replay", rep.replay_failures),
    );
    let pointwise = rep
        .rows
        .iter()
        .all(|r| r.evasion != Verdict::EvasionPossible || r.detection != Verdict::DetectionCertain);
    out.check(
        format!("bracket_order{tag}"),
        pointwise && rep.low.value <= rep.up.value,
        format!("low {} up {}", rep.low.value, rep.up.value),
    );
    let static_ok = rep.rows.iter().all(|r| !r.static_certain_survival || r.evasion == Verdict::EvasionPossible);
    out.check(
        format!("adaptive_beats_static{tag}"),
        static_ok && rep.low.value >= rep.static_certain_survival.value,
        format!("low {} static (certain) {}", rep.low.value, rep.static_certain_survival.value),
    );
}

fn named(e: &Estimate, tag: &str) -> Estimate {
    Estimate {
        name: format!("{}{tag}", e.name),
        ..e.clone()
    }
}

pub fn detect(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let ec = cfg.evasion_config(cfg.lambda)?;
    let rep = rho_bracket(&ec, cfg.replicas, cfg.seed)?;
    let mut out = Outcome::default();
    bracket_checks(&mut out, "", &rep);
    for e in [&rep.low, &rep.up, &rep.static_survival, &rep.static_certain_survival, &rep.blocked_fraction] {
        out.estimates.push(e.clone());
    }
    // survival of the static target at the end of each slice
    let beta = ec.params.beta;
    let mut curve = Vec::new();
    for t in 0..=ec.t_slices {
        let alive = rep
            .rows
            .iter()
            .filter(|r| r.static_detected_at.is_none_or(|x| x > t as f64 * beta))
            .count() as u64;
        curve.push(Estimate::proportion(format!("static_survival[t={t}]"), alive, cfg.replicas));
    }
    out.check(
        "survival_monotone",
        curve.windows(2).all(|w| w[1].value <= w[0].value),
        curve.iter().map(|e| format!("{:.3}", e.value)).collect::<Vec<_>>().join(" "),
    );
    out.estimates.extend(curve);
    let cov = origin_coverage(cfg.d, cfg.lambda, cfg.r, cfg.evasion.static_replicas, mix(cfg.seed, &[5]))?;
    let truth = 1.0 - (-cfg.lambda * unit_ball(cfg.d) * cfg.r.powi(cfg.d as i32)).exp();
    out.check(
        "detect_at_zero",
        (cov.value - truth).abs() <= cov.half_width() + 0.02,
        format!("{} vs {truth}", cov.value),
    );
    out.estimates.push(Estimate { name: "detect_at_zero".into(), ..cov });
    out.estimates.push(Estimate::exact("detect_at_zero_truth", truth));
    write_csv(dir, "replicas.csv", &verdict_rows(cfg.lambda, &rep.rows))?;
    Ok(out)
}

pub fn phase_scan(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let mut lambdas = cfg.evasion.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let mut out = Outcome::default();
    let (mut lows, mut ups, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for &lambda in &lambdas {
        let rep = rho_bracket(&cfg.evasion_config(lambda)?, cfg.replicas, cfg.seed)?;
        let tag = format!("[lambda={lambda}]");
        bracket_checks(&mut out, &tag, &rep);
        lows.push(named(&rep.low, &tag));
        ups.push(named(&rep.up, &tag));
        out.estimates.push(named(&rep.static_certain_survival, &tag));
        out.estimates.push(named(&rep.blocked_fraction, &tag));
        rows.extend(verdict_rows(lambda, &rep.rows));
    }
    out.check("rho_up_non_increasing", non_increasing(&ups), "");
    out.check("rho_low_non_increasing", non_increasing(&lows), "");
    let mut ests = Vec::new();
    for (l, u) in lows.into_iter().zip(ups) {
        ests.push(l);
        ests.push(u);
    }
    out.estimates.splice(0..0, ests);
    write_csv(dir, "replicas.csv", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct WeightRow {
    j: usize,
    ln_psi: f64,
    ln_psi_tilde: f64,
    b: String,
    psi_over_psi_tilde: f64,
    ln_beta: f64,
}

pub fn weights(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, RunError> {
    let p = cfg.params()?;
    let jmax = cfg.tessellation.jmax;
    let mut out = Outcome::default();
    for c in weight_suite(&p, jmax)? {
        out.check(&c.name, c.passed(), format!("{} failures in {} cases", c.failures, c.cases));
    }
    let mut rows = Vec::new();
    for j in 2..=jmax {
        let lp = ln_psi(&p, j, None)?;
        let pt = psi_tilde(&p, j)?;
        rows.push(WeightRow {
            j,
            ln_psi: lp,
            ln_psi_tilde: pt.ln_value(),
            b: pt.b.map(|b| b.to_string()).unwrap_or_default(),
            psi_over_psi_tilde: (lp - pt.ln_value()).exp(),
            ln_beta: p.ln_beta(j),
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.psi_over_psi_tilde).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    out.estimates.push(Estimate::new("psi_over_psi_tilde", hi, (lo, hi), ratios.len() as u64));
    write_csv(dir, "weights.csv", &rows)?;
    Ok(out)
}
