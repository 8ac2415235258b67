use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("time {time} is outside the simulated horizon [{start}, {end}]")]
    Horizon { time: f64, start: f64, end: f64 },

    #[error("time {0} is not aligned to the sub-step grid")]
    Unaligned(f64),

    #[error("expected point count {expected:.0} exceeds the memory cap {cap}")]
    MemoryCap { expected: f64, cap: usize },

    #[error("rejection sampler gave up after {attempts} attempts (acceptance rate {rate:.3e})")]
    RejectionCap { attempts: u64, rate: f64 },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("window too large for exhaustive enumeration ({size} > {cap})")]
    WindowTooLarge { size: u128, cap: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        reason: reason.into(),
    }
}
