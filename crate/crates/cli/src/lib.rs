//! Batch harness behind the `stsim` binary.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use stsim_core::Error;

use config::{ConfigError, ExperimentConfig, FieldError};
use output::SummaryBody;

pub const DEFAULT_OUT: &str = "stsim-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Poisson counts, measure preservation, confinement and time-0 coverage.
    PppCheck,
    /// Exhaustive containment and disjointness checks on an index window.
    TessellationVerify,
    /// Tail bounds against exact values.
    BoundsVerify,
    /// Subdensity checks and the replicated grid coupling.
    CouplingVerify,
    /// Escape probability of the root bad cluster.
    Percolation,
    /// Certificates, survival brackets and the static baseline.
    Detect,
    /// Survival brackets over a range of intensities.
    PhaseScan,
    /// Path weight tables.
    Weights,
}

impl Command {
    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Loads `path`, applies the overrides and validates the result.
pub fn prepare(path: &Path, ov: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = config::load_config(path)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(r) = ov.replicas {
        cfg.replicas = r;
    }
    if ov.threads.is_some() {
        cfg.threads = ov.threads;
    }
    if ov.out.is_some() {
        cfg.out = ov.out.clone();
    }
    cfg.finish()
}

fn config_error(field: &str, e: Error) -> ConfigError {
    ConfigError {
        errors: vec![FieldError {
            field: field.to_string(),
            message: e.to_string(),
        }],
    }
}

/// Checks that only make sense for one command.
pub fn precheck(cmd: Command, cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    match cmd {
        Command::TessellationVerify => cfg
            .params()
            .and_then(|p| p.with_kappa(cfg.tessellation.kmax + 1))
            .map(|_| ())
            .map_err(|e| config_error("tessellation.kmax", e)),
        Command::Detect => cfg.evasion_config(cfg.lambda).map(|_| ()).map_err(|e| config_error("evasion", e)),
        Command::PhaseScan => cfg
            .evasion
            .lambdas
            .iter()
            .try_for_each(|&l| cfg.evasion_config(l).map(|_| ()))
            .map_err(|e| config_error("evasion", e)),
        Command::CouplingVerify => {
            let p = cfg.coupling.params();
            p.check_grid()
                .and_then(|_| p.lemma().check())
                .map_err(|e| config_error("coupling", e))
        }
        _ => Ok(()),
    }
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunReport {
    pub body: SummaryBody,
    pub summary_digest: String,
    pub dir: PathBuf,
}

/// Runs `cmd` on the rayon pool sized by `cfg.threads` and writes every artifact.
/// Config errors surface before anything is written.
pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    precheck(cmd, cfg).map_err(RunError::Config)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(dir.join("FAILED"));
    fs::write(dir.join("effective_config.json"), cfg.to_json() + "\n")?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(std::io::Error::other)?;
    let result = pool.install(|| match cmd {
        Command::PppCheck => commands::ppp_check(cfg, &dir),
        Command::TessellationVerify => commands::tessellation_verify(cfg, &dir),
        Command::BoundsVerify => commands::bounds_verify(cfg, &dir),
        Command::CouplingVerify => commands::coupling_verify(cfg, &dir),
        Command::Percolation => commands::percolation(cfg, &dir),
        Command::Detect => commands::detect(cfg, &dir),
        Command::PhaseScan => commands::phase_scan(cfg, &dir),
        Command::Weights => commands::weights(cfg, &dir),
    });
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            output::write_failed(&dir, &e.to_string())?;
            return Err(e);
        }
    };
    let body = SummaryBody {
        schema_version: output::SCHEMA_VERSION,
        command: cmd.name(),
        config_digest: cfg.digest(),
        passed: out.checks.iter().all(|c| c.passed),
        estimates: out.estimates,
        checks: out.checks,
        warnings: cfg.warnings(),
    };
    let summary_digest = output::write_summary(&dir, &body)?;
    if !body.passed {
        let failed: Vec<&str> = body.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        output::write_failed(&dir, &format!("failed checks: {}", failed.join(", ")))?;
    }
    Ok(RunReport {
        body,
        summary_digest,
        dir,
    })
}
