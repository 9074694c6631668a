//! Error type shared across the engine.

use thiserror::Error;

/// Errors produced by the choice model, simulation, and estimation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument failed validation (non-finite value, length mismatch, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A design or schema specification is internally inconsistent.
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// Inputs are formally valid but degenerate (e.g. all kept weights zero).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Estimation could not proceed on the given dataset.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Exact enumeration would exceed the configured cap.
    #[error(
        "enumeration cap exceeded: {combinations} combinations > cap {cap}; \
         use the Monte Carlo estimator on simulated data instead"
    )]
    EnumerationCap { combinations: u128, cap: u128 },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn design(msg: impl Into<String>) -> Self {
        Error::InvalidDesign(msg.into())
    }
}
