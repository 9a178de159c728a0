//! Error types shared across the solver library.

use crate::symbol::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Argument outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Result magnitude exceeds the floating-point range.
    #[error("overflow: {0}")]
    Overflow(String),

    /// Adaptive quadrature could not meet its tolerance.
    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("eigendecomposition did not converge")]
    ConvergenceFailure,

    /// Structural symbol validation failed; the report lists the failures.
    #[error("symbol validation failed: {summary}")]
    ValidationFailure {
        summary: String,
        report: Box<ValidationReport>,
    },

    /// Symbol passed structural checks but is not admissible on this grid
    /// (negative eigenvalues on sampled lattice points).
    #[error("symbol rejected on grid: {0}")]
    SymbolRejected(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("field file format error: {0}")]
    FieldFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
