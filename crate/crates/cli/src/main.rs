use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stsim_cli::config::ConfigError;
use stsim_cli::{prepare, run, Command, Overrides, RunError};

/// Simulation and verification harness for the mobile Boolean detection model.
#[derive(Parser, Debug)]
#[command(name = "stsim", version)]
struct Args {
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default `stsim-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_exit(e: &ConfigError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(e).expect("errors serialize"));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let ov = Overrides {
        seed: args.seed,
        replicas: args.replicas,
        threads: args.threads,
        out: args.out,
    };
    let cfg = match prepare(&args.config, &ov) {
        Ok(c) => c,
        Err(e) => return config_exit(&e),
    };
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    match run(args.command, &cfg) {
        Ok(rep) => {
            let verdict = if rep.body.passed { "PASS" } else { "FAIL" };
            println!("{} {verdict} summary_digest={}", rep.body.command, rep.summary_digest);
            for c in rep.body.checks.iter().filter(|c| !c.passed) {
                println!("  failed {}: {}", c.name, c.detail);
            }
            if rep.body.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(RunError::Config(e)) => config_exit(&e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
