use thiserror::Error;

/// Errors raised by the simulator and experiment harness.
#[derive(Debug, Error)]
pub enum PslError {
    /// A parameter or configuration value violates its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The configuration file could not be parsed or failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A runtime invariant of the simulation did not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PslError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PslError {
    PslError::InvalidParameter(msg.into())
}
