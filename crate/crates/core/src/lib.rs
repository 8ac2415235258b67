//! Simulation and verification tools for a mobile Boolean detection model:
//! Poisson nodes moving as Brownian motions, a multi-scale space-time
//! tessellation with cell indicators, a thinning coupling for conditioned
//! motion, and detection/evasion certificates for an adaptive target.
// Positivity guards are written `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cellfield;
pub mod coupling;
pub mod error;
pub mod evasion;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod mobility;
pub mod tessellation;

pub use error::{Error, Result};
pub use stats::Estimate;
pub use tessellation::{Cell, ScaleParams};
