//! Experiment configuration: JSON loading, defaults, validation and the
//! effective-config echo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stsim_core::cellfield::{ClusterUse, EventMode};
use stsim_core::coupling::{CouplingParams, PfMode};
use stsim_core::evasion::EvasionConfig;
use stsim_core::mobility::{DisplacementMode, MAX_DIM};
use stsim_core::tessellation::integer_root;
use stsim_core::{Error, ScaleParams};

/// Everything a run needs. Only `d`, `lambda` and `r` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub lambda: f64,
    pub r: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default = "defaults::one_u")]
    pub eta: u64,
    #[serde(default = "defaults::m")]
    pub m: u64,
    /// Derived from `n^d = m/(7 eta)`; if given it must agree.
    #[serde(default)]
    pub n: Option<u64>,
    /// Scale-1 cube side; defaults to `r / (2 sqrt d)`.
    #[serde(default)]
    pub ell: Option<f64>,
    #[serde(default = "defaults::one")]
    pub c_mix: f64,
    #[serde(default = "defaults::kappa")]
    pub kappa: usize,
    #[serde(default = "defaults::one")]
    pub w: f64,
    /// Sub-steps per slice.
    #[serde(default = "defaults::s")]
    pub s: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::replicas")]
    pub replicas: u64,
    /// Worker threads; `None` uses the available parallelism. Not part of the digest.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Output directory. Not part of the digest.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tessellation: TessellationBlock,
    #[serde(default)]
    pub mobility: MobilityBlock,
    #[serde(default)]
    pub percolation: PercolationBlock,
    #[serde(default)]
    pub evasion: EvasionBlock,
    #[serde(default)]
    pub coupling: CouplingBlock,
}

mod defaults {
    pub fn eps() -> f64 {
        0.5
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn one_u() -> u64 {
        1
    }
    pub fn m() -> u64 {
        28
    }
    pub fn kappa() -> usize {
        2
    }
    pub fn s() -> usize {
        32
    }
    pub fn replicas() -> u64 {
        200
    }
}

/// Index window of `tessellation-verify` and the weight range of `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TessellationBlock {
    pub kmax: usize,
    pub imax: i64,
    pub tmax: i64,
    pub jmax: usize,
}

impl Default for TessellationBlock {
    fn default() -> Self {
        TessellationBlock { kmax: 3, imax: 3, tmax: 3, jmax: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityBlock {
    /// Evolution time of the measure-preservation check.
    pub delta: f64,
    /// Half side of the counting box.
    pub half: f64,
    pub confinement_dims: Vec<usize>,
    pub confinement_deltas: Vec<f64>,
    /// Cube sides as multiples of `sqrt(delta)`.
    pub confinement_ratios: Vec<f64>,
    pub confinement_n: usize,
    pub confinement_s: usize,
    pub coverage_replicas: u64,
}

impl Default for MobilityBlock {
    fn default() -> Self {
        MobilityBlock {
            delta: 5.0,
            half: 5.0,
            confinement_dims: vec![1, 2],
            confinement_deltas: vec![0.5, 1.0, 2.0],
            confinement_ratios: vec![3.0, 4.0, 5.0],
            confinement_n: 10_000,
            confinement_s: 64,
            coverage_replicas: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PercolationBlock {
    pub lambdas: Vec<f64>,
    pub half_cells: i64,
    pub slices: i64,
    pub substeps: usize,
    pub mode: EventMode,
    pub cluster: ClusterUse,
    pub displacement: DisplacementMode,
}

impl Default for PercolationBlock {
    fn default() -> Self {
        PercolationBlock {
            lambdas: vec![0.5, 2.0, 8.0],
            half_cells: 3,
            slices: 4,
            substeps: 2,
            mode: EventMode::Detect,
            cluster: ClusterUse::E,
            displacement: DisplacementMode::Checked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvasionBlock {
    pub t_slices: usize,
    pub half_cells: i64,
    pub delta_safe: Option<f64>,
    pub q: f64,
    /// Intensities of `phase-scan`.
    pub lambdas: Vec<f64>,
    /// Replicas of the time-0 coverage check in `detect`.
    pub static_replicas: u64,
}

impl Default for EvasionBlock {
    fn default() -> Self {
        EvasionBlock {
            t_slices: 10,
            half_cells: 16,
            delta_safe: None,
            q: 3.0,
            lambdas: vec![0.05, 0.5, 2.0, 5.0],
            static_replicas: 10_000,
        }
    }
}

/// Coupling regime; independent of the top-level `d` and `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingBlock {
    pub d: usize,
    pub delta: f64,
    pub ell: f64,
    pub k_outer: f64,
    pub k_inner: f64,
    pub eps: f64,
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
    pub pf: PfMode,
    /// Desk-tuned floor on the success rate.
    pub min_success: f64,
}

impl Default for CouplingBlock {
    fn default() -> Self {
        let p = CouplingParams::desk();
        CouplingBlock {
            d: p.d,
            delta: p.delta,
            ell: p.ell,
            k_outer: p.k_outer,
            k_inner: p.k_inner,
            eps: p.eps,
            beta: p.beta,
            c1: p.c1,
            c2: p.c2,
            pf: PfMode::One,
            min_success: 0.9,
        }
    }
}

impl CouplingBlock {
    pub fn params(&self) -> CouplingParams {
        let mut p = CouplingParams::grid(self.d, self.delta, self.ell, self.k_outer, self.k_inner, self.eps, self.beta);
        p.c1 = self.c1;
        p.c2 = self.c2;
        p
    }
}

/// One validation failure, addressed by its field path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Parse or validation failure; the CLI maps it to exit code 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub errors: Vec<FieldError>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.errors {
            writeln!(f, "{}: {}", e.field, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn core_field(e: &Error, prefix: &str) -> FieldError {
    let field = match e {
        Error::InvalidParam { field, .. } => format!("{prefix}{field}"),
        _ => prefix.trim_end_matches('.').to_string(),
    };
    FieldError::new(field, e.to_string())
}

/// Reads and validates `path`; defaults are filled in.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { errors: vec![FieldError::new("", format!("{}: {e}", path.display()))] })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| ConfigError { errors: vec![FieldError::new("", e.to_string())] })?;
    cfg.finish()
}

impl ExperimentConfig {
    /// Fills the derived fields and runs every check.
    pub fn finish(mut self) -> Result<Self, ConfigError> {
        let mut errs = Vec::new();
        if self.d == 0 || self.d > MAX_DIM {
            errs.push(FieldError::new("d", format!("supported dimensions are 1..={MAX_DIM}")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            errs.push(FieldError::new("lambda", "must be non-negative and finite"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            errs.push(FieldError::new("r", "must be positive and finite"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            errs.push(FieldError::new("eps", "must lie in (0,1)"));
        }
        if self.eta == 0 {
            errs.push(FieldError::new("eta", "must be a positive integer"));
        }
        if self.s == 0 {
            errs.push(FieldError::new("s", "need at least one sub-step per slice"));
        }
        if self.replicas == 0 {
            errs.push(FieldError::new("replicas", "need at least one replica"));
        }
        if self.threads == Some(0) {
            errs.push(FieldError::new("threads", "need at least one thread"));
        }
        if errs.is_empty() {
            let q = self.m / (7 * self.eta);
            match integer_root(q, self.d) {
                Some(n) if self.m.is_multiple_of(7 * self.eta) => {
                    if self.n.is_some_and(|given| given != n) {
                        errs.push(FieldError::new("n", format!("n^d = m/(7*eta) gives n = {n}")));
                    }
                    self.n = Some(n);
                }
                _ => errs.push(FieldError::new(
                    "n",
                    format!(
                        "n^d = m/(7*eta) has no integer solution (m={}, eta={}, d={})",
                        self.m, self.eta, self.d
                    ),
                )),
            }
        }
        if self.ell.is_none() && self.r > 0.0 && self.d > 0 {
            self.ell = Some(self.r / (2.0 * (self.d as f64).sqrt()));
        }
        if errs.is_empty() {
            if let Err(e) = self.params() {
                errs.push(core_field(&e, ""));
            }
        }
        self.check_blocks(&mut errs);
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError { errors: errs })
        }
    }

    fn check_blocks(&self, errs: &mut Vec<FieldError>) {
        let t = &self.tessellation;
        if t.kmax == 0 || t.imax < 0 || t.tmax < 0 {
            errs.push(FieldError::new("tessellation.kmax", "need kmax >= 1, imax >= 0, tmax >= 0"));
        }
        if t.jmax < 2 {
            errs.push(FieldError::new("tessellation.jmax", "weights start at j = 2"));
        }
        let mb = &self.mobility;
        if !(mb.delta > 0.0 && mb.delta.is_finite()) {
            errs.push(FieldError::new("mobility.delta", "evolution time must be positive"));
        }
        if !(mb.half > 0.0) {
            errs.push(FieldError::new("mobility.half", "must be positive"));
        }
        if mb.confinement_dims.iter().any(|&d| d == 0 || d > MAX_DIM) {
            errs.push(FieldError::new("mobility.confinement_dims", format!("dimensions must lie in 1..={MAX_DIM}")));
        }
        if mb.confinement_deltas.iter().any(|&x| !(x > 0.0)) {
            errs.push(FieldError::new("mobility.confinement_deltas", "must be positive"));
        }
        if mb.confinement_ratios.iter().any(|&x| x < 3.0) {
            errs.push(FieldError::new("mobility.confinement_ratios", "the bound needs z >= 3 sqrt(delta)"));
        }
        if mb.confinement_n == 0 || mb.confinement_s == 0 || mb.coverage_replicas == 0 {
            errs.push(FieldError::new("mobility.confinement_n", "sample sizes must be positive"));
        }
        let p = &self.percolation;
        if p.lambdas.is_empty() || p.lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            errs.push(FieldError::new("percolation.lambdas", "need at least one non-negative intensity"));
        }
        if p.half_cells < 0 || p.slices < 1 || p.substeps == 0 {
            errs.push(FieldError::new("percolation.slices", "need half_cells >= 0, slices >= 1, substeps >= 1"));
        }
        let e = &self.evasion;
        if e.t_slices == 0 || e.half_cells < 0 {
            errs.push(FieldError::new("evasion.t_slices", "need t_slices >= 1 and half_cells >= 0"));
        }
        if e.delta_safe.is_some_and(|x| !(x >= 0.0)) || !(e.q >= 0.0) {
            errs.push(FieldError::new("evasion.delta_safe", "margins must be non-negative"));
        }
        if e.lambdas.is_empty() || e.lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            errs.push(FieldError::new("evasion.lambdas", "need at least one non-negative intensity"));
        }
        if e.static_replicas == 0 {
            errs.push(FieldError::new("evasion.static_replicas", "need at least one replica"));
        }
        let c = &self.coupling;
        if let Err(err) = c.params().validate() {
            errs.push(core_field(&err, "coupling."));
        }
        if !(0.0..=1.0).contains(&c.min_success) {
            errs.push(FieldError::new("coupling.min_success", "must lie in [0,1]"));
        }
    }

    /// Scale parameters of the top-level fields.
    pub fn params(&self) -> stsim_core::Result<ScaleParams> {
        let ell = self.ell.unwrap_or(self.r / (2.0 * (self.d as f64).sqrt()));
        ScaleParams::new(self.d, self.m, self.eta, self.eps, ell, self.c_mix)?
            .with_kappa(self.kappa)?
            .with_lambda(self.lambda)?
            .with_r(self.r)?
            .with_w(self.w)
    }

    /// Soft warnings (for instance `w` below its admissible floor).
    pub fn warnings(&self) -> Vec<String> {
        self.params().and_then(|p| p.validate()).unwrap_or_default()
    }

    /// Evasion setting at intensity `lambda`.
    pub fn evasion_config(&self, lambda: f64) -> stsim_core::Result<EvasionConfig> {
        let cfg = EvasionConfig {
            params: self.params()?.with_lambda(lambda)?,
            s: self.s,
            t_slices: self.evasion.t_slices,
            half_cells: self.evasion.half_cells,
            delta_safe: self.evasion.delta_safe,
            q: self.evasion.q,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the experiment fields; `threads` and `out` do not enter.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.out = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
