//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Criteria that exercise a command go through the `stsim` binary; the rest
//! call the library directly. Thresholds marked "desk-tuned" come from the
//! fixtures documented in the README, not from asymptotic theory.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;
use stsim_core::bounds::verify_grid;
use stsim_core::cellfield::suite::{algebra_suite, AlgebraConfig};
use stsim_core::coupling::{verify_indistinguishable, LemmaParams, PfMode};
use stsim_core::evasion::{rho_bracket, EvasionConfig, Verdict};
use stsim_core::mobility::suite::{confinement_check, measure_preservation};
use stsim_core::tessellation::verify::weight_suite;
use stsim_core::ScaleParams;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Run {
    code: i32,
    stdout: String,
    summary: Value,
}

/// Runs the binary on a config written next to the output directory.
fn stsim(cmd: &str, config: &Value, out: &Path, extra: &[&str]) -> Result<Run, String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let cfg_path = out.join("config.json");
    std::fs::write(&cfg_path, config.to_string()).map_err(|e| e.to_string())?;
    let o = Command::new(env!("CARGO_BIN_EXE_stsim"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    let code = o.status.code().unwrap_or(-1);
    let summary = std::fs::read_to_string(out.join("summary.json"))
        .map_err(|_| format!("{cmd}: no summary (exit {code}): {}", String::from_utf8_lossy(&o.stderr)))?;
    Ok(Run {
        code,
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        summary: serde_json::from_str(&summary).map_err(|e| e.to_string())?,
    })
}

fn estimate(s: &Value, name: &str) -> Result<(f64, f64, f64), String> {
    let e = s["estimates"]
        .as_array()
        .and_then(|a| a.iter().find(|e| e["name"] == name))
        .ok_or_else(|| format!("no estimate {name}"))?;
    let f = |k: &str| e[k].as_f64().unwrap_or(f64::NAN);
    Ok((f("value"), f("ci_low"), f("ci_high")))
}

fn failed_checks(s: &Value) -> Vec<String> {
    s["checks"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter(|c| c["passed"] != true)
                .map(|c| format!("{} ({})", c["name"].as_str().unwrap_or("?"), c["detail"].as_str().unwrap_or("")))
                .collect()
        })
        .unwrap_or_default()
}

fn tessellation_suite(tmp: &Path) -> Outcome {
    let mut total = 0;
    for (d, m) in [(1, 14), (2, 28)] {
        let cfg = serde_json::json!({"d": d, "lambda": 1.0, "r": 1.0, "m": m,
            "tessellation": {"kmax": 3, "imax": 3, "tmax": 3}});
        let run = stsim("tessellation-verify", &cfg, &tmp.join(format!("tess{d}")), &[])?;
        let bad = failed_checks(&run.summary);
        ensure(run.code == 0 && bad.is_empty(), format!("d={d}: exit {} {bad:?}", run.code))?;
        let n = run.summary["checks"].as_array().map_or(0, |a| a.len());
        ensure(n >= 14, format!("d={d}: only {n} check families"))?;
        total += n;
    }
    Ok(format!("{total} check families pass on both windows"))
}

fn weight_laws(_: &Path) -> Outcome {
    for (d, m) in [(1, 14), (2, 28), (3, 56)] {
        let p = ScaleParams::new(d, m, 1, 0.5, 1.0, 1.0).map_err(|e| e.to_string())?;
        for c in weight_suite(&p, 60).map_err(|e| e.to_string())? {
            ensure(c.passed(), format!("d={d}: {c:?}"))?;
        }
    }
    Ok("j = 2..60, d = 1..3".into())
}

fn measure(_: &Path) -> Outcome {
    let (c0, c1) = measure_preservation(2, 2.0, 5.0, 5.0, 500, 31).map_err(|e| e.to_string())?;
    for rep in [&c0, &c1] {
        ensure(rep.mean_ok() && rep.dispersion_ok(), format!("{rep:?}"))?;
    }
    Ok(format!(
        "mean {:.2} vs {:.0}, dispersion {:.3} after evolution",
        c1.mean.value, c1.expected, c1.dispersion
    ))
}

fn confinement(_: &Path) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut i = 0;
    for d in [1, 2] {
        for delta in [0.5, 1.0, 2.0] {
            for k in [3.0, 4.0, 5.0] {
                i += 1;
                let (emp, bound) =
                    confinement_check(d, delta, k * f64::sqrt(delta), 10_000, 64, 500 + i).map_err(|e| e.to_string())?;
                let se = (emp.value * (1.0 - emp.value) / emp.n as f64).sqrt();
                let slack = emp.value - (bound - 2.0 * se);
                worst = worst.min(slack);
                ensure(slack >= 0.0, format!("d={d} delta={delta} k={k}: {} < {bound} - 2*{se}", emp.value))?;
            }
        }
    }
    Ok(format!("18 grid points, smallest slack {worst:.4}"))
}

fn tail_bounds(_: &Path) -> Outcome {
    let reports = verify_grid();
    let bad: Vec<_> = reports.iter().filter(|r| !r.holds()).collect();
    ensure(bad.is_empty(), format!("{bad:?}"))?;
    let count = |name: &str| reports.iter().filter(|r| r.name.starts_with(name)).count();
    ensure(count("chernoff") == 24 && count("gaussian") == 8, "grid incomplete")?;
    Ok(format!("{} inequalities hold exactly", reports.len()))
}

fn indistinguishable(_: &Path) -> Outcome {
    let mut parts = Vec::new();
    for d in [1, 2] {
        let xi = 0.25;
        let delta = LemmaParams::min_delta(d, 1.0, xi);
        let p = LemmaParams {
            d,
            delta,
            m_window: LemmaParams::min_window(d, delta, xi),
            m_sep: 1.0,
            xi,
        };
        let rep = verify_indistinguishable(&p, PfMode::One).map_err(|e| e.to_string())?;
        ensure(rep.passes, format!("d={d}: {rep:?}"))?;
        parts.push(format!(
            "d={d}: margin {:.1e} (relative {:.1e}), integral {:.4} >= {}",
            rep.domination_margin,
            rep.relative_margin,
            rep.integral,
            1.0 - xi
        ));
    }
    Ok(parts.join("; "))
}

fn coupling(tmp: &Path) -> Outcome {
    let cfg = serde_json::json!({"d": 1, "lambda": 1.0, "r": 1.0, "seed": 2024});
    let run = stsim("coupling-verify", &cfg, &tmp.join("coupling"), &["--replicas", "200"])?;
    let bad = failed_checks(&run.summary);
    ensure(run.code == 0 && bad.is_empty(), format!("exit {} {bad:?}", run.code))?;
    let (succ, _, _) = estimate(&run.summary, "coupling_success")?;
    ensure(succ >= 0.9, format!("success {succ}"))?;
    Ok(format!("success {succ:.3} (desk-tuned floor 0.9), subset and dispersion checks pass"))
}

fn algebra(_: &Path) -> Outcome {
    let cfg = AlgebraConfig::desk().map_err(|e| e.to_string())?;
    let rep = algebra_suite(&cfg, 50, 88).map_err(|e| e.to_string())?;
    ensure(rep.clean() && rep.realizations == 50, format!("{rep:?}"))?;
    Ok(format!("{} cells, {} bad, no violations", rep.cells, rep.bad_cells))
}

fn certificates(_: &Path) -> Outcome {
    let mut parts = Vec::new();
    for (lambda, seed) in [(0.3, 41), (1.0, 42)] {
        let cfg = EvasionConfig::desk(lambda).map_err(|e| e.to_string())?;
        let rep = rho_bracket(&cfg, 200, seed).map_err(|e| e.to_string())?;
        ensure(rep.exclusivity_violations == 0, format!("lambda={lambda}: both verdicts"))?;
        ensure(rep.replay_failures == 0, format!("lambda={lambda}: replay failed"))?;
        let witnesses = rep.rows.iter().filter(|r| r.evasion == Verdict::EvasionPossible).count();
        ensure(
            rep.rows.iter().filter(|r| r.replay_ok == Some(true)).count() == witnesses,
            "some witness was not replayed",
        )?;
        ensure(rep.low.value <= rep.up.value, format!("lambda={lambda}: {:?} > {:?}", rep.low, rep.up))?;
        parts.push(format!("lambda={lambda}: {witnesses} witnesses, low {:.3} up {:.3}", rep.low.value, rep.up.value));
    }
    Ok(parts.join("; "))
}

fn phase(tmp: &Path) -> Outcome {
    let cfg = serde_json::json!({"d": 2, "lambda": 1.0, "r": 1.0, "seed": 7,
        "evasion": {"t_slices": 10, "lambdas": [0.05, 5.0]}});
    let run = stsim("phase-scan", &cfg, &tmp.join("phase"), &["--replicas", "200"])?;
    let bad = failed_checks(&run.summary);
    ensure(run.code == 0 && bad.is_empty(), format!("phase-scan exit {} {bad:?}", run.code))?;
    let (up5, _, _) = estimate(&run.summary, "rho_up[lambda=5]")?;
    let (low005, _, _) = estimate(&run.summary, "rho_low[lambda=0.05]")?;
    ensure(up5 <= 0.1, format!("rho_up(5) = {up5}"))?;
    ensure(low005 >= 0.5, format!("rho_low(0.05) = {low005}"))?;

    let cfg = serde_json::json!({"d": 2, "lambda": 1.0, "r": 1.0, "seed": 8,
        "percolation": {"lambdas": [0.5, 2.0, 8.0], "slices": 10}});
    let run = stsim("percolation", &cfg, &tmp.join("percolation"), &["--replicas", "200"])?;
    let bad = failed_checks(&run.summary);
    ensure(run.code == 0 && bad.is_empty(), format!("percolation exit {} {bad:?}", run.code))?;
    let esc: Vec<String> = [0.5, 2.0, 8.0]
        .iter()
        .map(|l| estimate(&run.summary, &format!("escape[lambda={l}]")).map(|e| format!("{:.3}", e.0)))
        .collect::<Result<_, _>>()?;
    Ok(format!(
        "rho_up(5) = {up5:.3} (desk-tuned <= 0.1), rho_low(0.05) = {low005:.3} (>= 0.5), escape {}",
        esc.join(" / ")
    ))
}

fn static_baseline(tmp: &Path) -> Outcome {
    let cfg = serde_json::json!({"d": 2, "lambda": 1.0, "r": 1.0, "seed": 11,
        "evasion": {"static_replicas": 10000}});
    let run = stsim("detect", &cfg, &tmp.join("detect"), &["--replicas", "200"])?;
    let bad = failed_checks(&run.summary);
    ensure(run.code == 0 && bad.is_empty(), format!("exit {} {bad:?}", run.code))?;
    let (p0, lo, hi) = estimate(&run.summary, "detect_at_zero")?;
    let truth = 1.0 - (-std::f64::consts::PI).exp();
    ensure((p0 - truth).abs() <= 0.5 * (hi - lo) + 0.02, format!("{p0} vs {truth}"))?;
    let (low, _, _) = estimate(&run.summary, "rho_low")?;
    let (stat, _, _) = estimate(&run.summary, "static_certain_survival")?;
    ensure(low >= stat, format!("rho_low {low} < static {stat}"))?;
    Ok(format!("P(T_det = 0) = {p0:.4} vs {truth:.4}; rho_low {low:.3} >= static {stat:.3}"))
}

fn reproducibility(tmp: &Path) -> Outcome {
    let cfg = serde_json::json!({"d": 2, "lambda": 1.0, "r": 1.0, "seed": 5,
        "tessellation": {"kmax": 2, "imax": 2, "tmax": 2, "jmax": 30},
        "mobility": {"confinement_n": 1000, "coverage_replicas": 1000, "confinement_dims": [2]},
        "percolation": {"lambdas": [2.0, 8.0]},
        "evasion": {"lambdas": [0.3, 2.0], "static_replicas": 1000}});
    let commands = [
        "ppp-check",
        "tessellation-verify",
        "bounds-verify",
        "coupling-verify",
        "percolation",
        "detect",
        "phase-scan",
        "weights",
    ];
    for cmd in commands {
        let mut digests = Vec::new();
        for threads in ["1", "8"] {
            let dir: PathBuf = tmp.join(format!("repro-{cmd}-{threads}"));
            let run = stsim(cmd, &cfg, &dir, &["--threads", threads, "--replicas", "24"])?;
            let mut s = run.summary.clone();
            s.as_object_mut().map(|o| o.remove("timestamp"));
            ensure(run.stdout.contains(run.summary["summary_digest"].as_str().unwrap_or("-")), "digest not echoed")?;
            digests.push(s);
        }
        ensure(digests[0] == digests[1], format!("{cmd}: summaries differ between 1 and 8 threads"))?;
    }
    Ok(format!("{} commands give identical summary digests at 1 and 8 threads", commands.len()))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn(&Path) -> Outcome,
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria = [
        Criterion { name: "tessellation lemma suite", limit: min(2), run: tessellation_suite },
        Criterion { name: "weight laws", limit: Duration::from_secs(1), run: weight_laws },
        Criterion { name: "measure preservation", limit: min(2), run: measure },
        Criterion { name: "confinement bound grid", limit: min(3), run: confinement },
        Criterion { name: "tail bounds", limit: Duration::from_secs(1), run: tail_bounds },
        Criterion { name: "indistinguishable subdensity", limit: min(1), run: indistinguishable },
        Criterion { name: "coupling soundness", limit: min(3), run: coupling },
        Criterion { name: "indicator algebra", limit: min(3), run: algebra },
        Criterion { name: "certificates", limit: min(5), run: certificates },
        Criterion { name: "phase behaviour", limit: min(10), run: phase },
        Criterion { name: "static baseline", limit: min(3), run: static_baseline },
        Criterion { name: "reproducibility", limit: min(10), run: reproducibility },
    ];
    let mut failures = 0;
    for (i, c) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let res = (c.run)(tmp.path());
        let took = t0.elapsed();
        let (ok, detail) = match res {
            Ok(d) if took <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow, limit {:?}", c.limit)),
            Err(e) => (false, e),
        };
        failures += usize::from(!ok);
        println!(
            "{} {:>2} {} ({:.1}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
