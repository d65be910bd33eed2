use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inconsistent data: {0}")]
    DataInconsistency(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("norm is unbounded: tails differ ({left_diff:e} on the left, {right_diff:e} on the right)")]
    UnboundedNorm { left_diff: f64, right_diff: f64 },

    #[error("grids are not comparable: {0}")]
    DomainMismatch(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
