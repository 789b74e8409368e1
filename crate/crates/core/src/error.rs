use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("grid of {grid_size}^{dim} points cannot resolve {truncation} basis functions")]
    GridTooCoarse {
        grid_size: usize,
        dim: usize,
        truncation: usize,
    },

    #[error("noise covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("coefficient fields were built for different priors")]
    ParamsMismatch,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("malformed configuration: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
