use thiserror::Error;

/// Errors raised by estimators, simulators and the harness.
#[derive(Debug, Error)]
pub enum VolError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient history: need {needed} observations before the origin, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("singular local design at x0 = {x0}")]
    SingularDesign { x0: f64 },

    #[error("no state-domain coverage at x0 = {x0} (historical range [{lo}, {hi}])")]
    NoCoverage { x0: f64, lo: f64, hi: f64 },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("quantile unavailable: {0}")]
    QuantileUnavailable(String),

    #[error("measure not applicable: {0}")]
    NotApplicable(&'static str),

    #[error("ingestion failed at row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = VolError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> VolError {
    VolError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
