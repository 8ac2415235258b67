//! `summary.json`, CSV tables and the `FAILED` marker.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use stsim_core::Estimate;

pub const SCHEMA_VERSION: u32 = 1;

/// A named pass/fail assertion of a command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Deterministic part of the summary; `summary_digest` hashes exactly this.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryBody {
    pub schema_version: u32,
    pub command: String,
    pub config_digest: String,
    pub passed: bool,
    pub estimates: Vec<Estimate>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl SummaryBody {
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("summary serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    #[serde(flatten)]
    body: &'a SummaryBody,
    summary_digest: String,
    /// Seconds since the Unix epoch; excluded from both digests.
    timestamp: u64,
}

pub fn write_summary(dir: &Path, body: &SummaryBody) -> io::Result<String> {
    let digest = body.digest();
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let s = Summary {
        body,
        summary_digest: digest.clone(),
        timestamp,
    };
    let text = serde_json::to_string_pretty(&s).map_err(io::Error::other)?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(digest)
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()
}

pub fn write_failed(dir: &Path, reason: &str) -> io::Result<()> {
    fs::write(dir.join("FAILED"), format!("{reason}\n"))
}
