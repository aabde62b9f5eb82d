use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("connectivity matrix is not symmetric (|G[{i}][{j}] - G[{j}][{i}]| = {diff:e})")]
    NotSymmetric { i: usize, j: usize, diff: f64 },

    #[error("trajectory diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("stabilization buffer holds {len} of {capacity} samples")]
    BufferNotFull { len: usize, capacity: usize },

    #[error("undefined for fewer than two values (got {0})")]
    TooFewValues(usize),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("malformed file: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
