//! Error type shared by all toolkit modules.

use thiserror::Error;

/// Errors surfaced by the solver toolkit.
///
/// Programming-contract violations (mismatched operand lengths in hot-path
/// kernels) panic instead; every data-dependent failure goes through this
/// enum so callers can react to it.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is numerically singular (no usable pivot in column {col})")]
    SingularMatrix { col: usize },

    #[error("matrix is not positive definite (pivot {pivot:.6e} in column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },

    #[error("matrix is not symmetric (first mismatch at ({row},{col}))")]
    NotSymmetric { row: usize, col: usize },

    #[error("line search failed at Newton iteration {iter}: no sufficient decrease after {backtracks} halvings")]
    LineSearchFailure { iter: usize, backtracks: usize },

    #[error("inner Krylov solver stagnated after {iters} iterations: residual {achieved:.3e} exceeds target {required:.3e}")]
    KrylovStagnation {
        iters: usize,
        achieved: f64,
        required: f64,
    },

    #[error("preconditioner is not positive definite: <v, P^-1 v> = {value:.3e}")]
    IndefinitePreconditioner { value: f64 },

    #[error("system size {n} exceeds the dense-diagnostics threshold {threshold}")]
    DenseThresholdExceeded { n: usize, threshold: usize },

    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SolverError>;
