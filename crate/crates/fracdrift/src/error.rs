//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced or encountered non-finite values, or a
    /// quadrature failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Inconsistent dimensions (e.g. a model dimension exceeding the number
    /// of copies).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// The Gram matrix of the design is numerically singular.
    #[error("singular design at dimension {dim} (condition estimate {condition:.3e})")]
    SingularDesign { dim: usize, condition: f64 },

    /// A weighted basis could not be orthonormalized reliably.
    #[error("ill-conditioned basis at dimension {dim} (condition estimate {condition:.3e})")]
    IllConditionedBasis { dim: usize, condition: f64 },

    /// A covariance factorization failed (reports the Hurst index and the
    /// step count of the offending grid).
    #[error("covariance decomposition failed (H = {hurst}, n = {steps})")]
    Decomposition { hurst: f64, steps: usize },

    /// The operation is not provided for the requested variant.
    #[error("unsupported: {0}")]
    Unsupported(String),
}
