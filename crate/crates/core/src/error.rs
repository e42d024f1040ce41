use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SatError {
    /// A matrix that must be positive definite failed its Cholesky factorization.
    #[error("matrix is not positive definite ({context})")]
    NotPd { context: String },

    /// A symmetric indefinite system could not be solved to tolerance.
    #[error("singular system ({context}): relative residual {residual:e}")]
    Singular { context: String, residual: f64 },

    /// Data violating a solvability condition (e.g. a nonzero total boundary flux).
    #[error("incompatible data ({context}): defect {defect:e}")]
    Incompatible { context: String, defect: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested reference degree exceeds the configured dense-memory cap.
    #[error("degree {requested} exceeds memory guard {cap}")]
    MemoryGuard { requested: usize, cap: usize },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("overflow in {0}")]
    Overflow(String),
}

pub type Result<T> = std::result::Result<T, SatError>;
