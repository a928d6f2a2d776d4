//! Error type shared across the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar or structural precondition was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A noise specification failed validation.
    #[error("invalid noise spec: {0}")]
    InvalidSpec(String),

    /// An iterate left the finite range; the run is aborted, never clamped.
    #[error("non-finite iterate at step {step}")]
    NonFinite { step: usize },

    /// A remainder callback emitted a value above its declared bound.
    #[error("remainder bound violated at step {step}: |r| = {value:.3e} > {bound:.3e}")]
    RemainderBound { step: usize, value: f64, bound: f64 },

    /// An autocovariance series failed to contract geometrically.
    #[error("autocovariance series does not converge: {0}")]
    SeriesDiverged(String),

    /// Experiment configuration failed schema validation; carries the field path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Malformed input file (CSV stream, JSON report, ...).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
