use thiserror::Error;

use crate::trace::Address;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid range: low {low} must be below high {high}")]
    InvalidRange { low: f64, high: f64 },

    #[error("invalid probability {0}: must lie in [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid truncated normal parameters: {0}")]
    InvalidParams(String),

    #[error("categorical weights are empty")]
    EmptyWeights,

    #[error("categorical weight {index} is negative or non-finite ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("value {value} for {what} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("address {0:?} is not a latent site of this trace")]
    UnknownAddress(Address),

    #[error("posterior is empty")]
    EmptyPosterior,

    #[error("posterior is degenerate: every importance weight is zero (ESS = 0)")]
    DegeneratePosterior,

    #[error("distributions have different support sizes ({0} vs {1})")]
    SupportMismatch(usize, usize),

    #[error("distribution does not sum to one (sum = {0})")]
    Unnormalized(f64),

    #[error("unknown user {user} (model has {n_users} users)")]
    UnknownUser { user: usize, n_users: usize },

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
