//! Poisson nodes moving as independent Brownian motions.

mod conditioned;
mod index;
mod ppp;
pub mod suite;
mod trajectory;

pub use conditioned::{conditioned_increment, ConditionedDraw};
pub use index::SpatialIndex;
pub use ppp::{sample_ppp, DEFAULT_POINT_CAP};
pub use trajectory::TrajectorySet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Simulate a padded box and let nodes leave it.
    #[default]
    Padded,
    /// Periodic box; positions wrap on access.
    Torus,
}

/// How the continuous-time displacement is judged from sub-step samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DisplacementMode {
    /// Sub-step maxima only.
    Checked,
    /// Sub-step maxima against a window shrunk by `q` sub-step standard deviations.
    Conservative { q: f64 },
}

impl Default for DisplacementMode {
    fn default() -> Self {
        DisplacementMode::Conservative { q: 3.0 }
    }
}

/// One realization's sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub d: usize,
    pub lambda: f64,
    pub r: f64,
    /// Analysed region is `[-half_width, half_width]^d`.
    pub half_width: f64,
    /// Extra simulated margin; `None` means `r + 6 sqrt(T)`.
    pub padding: Option<f64>,
    pub beta: f64,
    pub slices: usize,
    /// Index of the first slice; negative to simulate before time 0.
    pub start_slice: i64,
    pub s: usize,
    pub boundary: Boundary,
    pub seed: u64,
    /// Variance per unit time of each coordinate.
    pub variance_rate: f64,
    /// Keep every sub-step position, not only slice summaries.
    pub store_path: bool,
}

impl SimConfig {
    pub fn new(d: usize, lambda: f64, r: f64, half_width: f64, beta: f64, slices: usize, s: usize, seed: u64) -> Self {
        SimConfig {
            d,
            lambda,
            r,
            half_width,
            padding: None,
            beta,
            slices,
            start_slice: 0,
            s,
            boundary: Boundary::Padded,
            seed,
            variance_rate: 1.0,
            store_path: false,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.slices as f64 * self.beta
    }

    pub fn effective_padding(&self) -> f64 {
        match self.boundary {
            Boundary::Torus => 0.0,
            Boundary::Padded => self
                .padding
                .unwrap_or(self.r + 6.0 * (self.variance_rate * self.horizon()).sqrt()),
        }
    }

    /// Simulated box `[lo, hi]` per axis.
    pub fn sim_box(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.half_width + self.effective_padding();
        (vec![-h; self.d], vec![h; self.d])
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > MAX_DIM {
            return Err(invalid("d", format!("dimension must lie in 1..={MAX_DIM}")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be non-negative and finite"));
        }
        if !(self.half_width > 0.0) {
            return Err(invalid("half_width", "must be positive"));
        }
        if matches!(self.padding, Some(p) if !(p >= 0.0)) {
            return Err(invalid("padding", "must be non-negative"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be positive"));
        }
        if self.s == 0 {
            return Err(invalid("s", "need at least one sub-step per slice"));
        }
        if !(self.variance_rate >= 0.0) {
            return Err(invalid("variance_rate", "must be non-negative"));
        }
        Ok(())
    }

    /// Samples the initial nodes and evolves them over the horizon.
    pub fn realize(&self) -> Result<TrajectorySet> {
        self.validate()?;
        let (lo, hi) = self.sim_box();
        let pts = sample_ppp(&lo, &hi, self.lambda, self.seed, 0, DEFAULT_POINT_CAP)?;
        let torus = (self.boundary == Boundary::Torus).then(|| (lo.clone(), hi.clone()));
        let mut t = TrajectorySet::new(
            self.d,
            pts,
            self.beta,
            self.s,
            self.start_slice,
            self.seed,
            self.variance_rate,
            torus,
            self.store_path,
        )?;
        t.evolve(self.slices);
        Ok(t)
    }
}
