//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by dataset handling and the solver pipeline.
#[derive(Debug, Error)]
pub enum MedaError {
    /// A matrix or vector has an incompatible shape, or a dimension
    /// parameter violates its precondition (e.g. a subspace dimension
    /// larger than half the ambient dimension).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A data file could not be parsed. Carries the 1-based line number
    /// when one is available.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// An iterative method failed to reach its tolerance.
    #[error("{method} did not converge within {iterations} iterations")]
    Convergence { method: String, iterations: usize },

    /// The input is degenerate for the requested operation (zero rows for
    /// cosine similarity, zero bandwidth, non-finite intermediates, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A linear system factorization failed or the solution residual could
    /// not be driven below its contract.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Not enough samples to run the requested estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An operation received an empty input it cannot define a value for.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A scalar parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Dimension,
    Numerical,
    Io,
}

impl MedaError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            MedaError::Parse { .. } => ErrorCategory::Parse,
            MedaError::Dimension(_) => ErrorCategory::Dimension,
            MedaError::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, MedaError>;
