//! Deterministic numerical kernels shared by the statistical modules.

pub mod linalg;
pub mod mixture;
pub mod quad;
pub mod special;

pub use linalg::{dot, eig_sym, solve_spd, Cholesky, Matrix, SymEigen, SymMatrix};
pub use mixture::{mixture_tail, MixtureSpec};
pub use special::{chisq_cdf, chisq_sf, norm_cdf, norm_pdf, norm_sf};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },
    #[error("numerical integration failed: {reason}")]
    IntegrationFailure { reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected a non-empty square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("invalid mixture: {reason}")]
    InvalidMixture { reason: String },
}
