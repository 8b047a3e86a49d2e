//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of the operation.
    #[error("domain: {0}")]
    Domain(String),

    /// Parameter failed validation at construction.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Result grows without bound or exceeds f64 range.
    #[error("overflow: {0}")]
    Overflow(String),

    /// Iterative scheme exhausted its budget before reaching tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// An integrand or intermediate produced NaN/inf; reported with context.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Dense linear algebra failure (e.g. covariance not positive definite).
    #[error("linear algebra: {0}")]
    LinearAlgebra(String),

    /// Run configuration rejected before any computation.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
