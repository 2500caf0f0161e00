//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by the numerical routines and the scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range (e.g. a Hurst index
    /// not in `(0, 1/2)`, a non-positive horizon, an empty grid).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A linear-algebra factorization failed (e.g. a covariance matrix
    /// that is not numerically positive definite even after jitter).
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// An adaptive quadrature did not reach its tolerance within budget.
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    /// A numeric result is non-finite where a finite value is required.
    #[error("non-finite result: {0}")]
    NonFinite(String),

    /// Scenario configuration could not be parsed.
    #[error("config parse error: {0}")]
    Parse(String),

    /// Scenario configuration parsed but failed validation.
    #[error("config validation error: {0}")]
    Validation(String),

    /// An I/O failure while reading configs or writing reports.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for [`Error::InvalidParameter`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
