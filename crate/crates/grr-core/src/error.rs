//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("score generator is degenerate (zero variance after centering)")]
    ZeroVariance,

    #[error("ill-posed density: {0}")]
    IllPosedDensity(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("iterate diverged at iteration {iteration} (norm {norm})")]
    Divergence { iteration: usize, norm: f64 },

    #[error("condition violated: {0}")]
    ConditionViolation(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
