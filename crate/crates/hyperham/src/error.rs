//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("generator set is empty")]
    EmptyGeneratorSet,
    #[error("{count} generators exceed the bound p <= m-1 = {max} in dimension {dim}")]
    TooManyGenerators { count: usize, dim: usize, max: usize },
    #[error("matrix is not antisymmetric: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotAntisymmetric { residual: f64, tol: f64 },
    #[error(
        "matrix is not in SO(3): orthogonality residual {orthogonality:.3e}, determinant {det:.6}"
    )]
    NotSpecialOrthogonal { orthogonality: f64, det: f64 },
    #[error("matrix does not satisfy A^2 = -I: residual {residual:.3e} exceeds {tol:.3e}")]
    NotComplexStructure { residual: f64, tol: f64 },
    #[error("matrix lies outside the generator span: residual {residual:.3e} exceeds {tol:.3e}")]
    OutsideGeneratorSpan { residual: f64, tol: f64 },
    #[error("matrix is numerically singular (reciprocal condition estimate {rcond:.3e})")]
    SingularMatrix { rcond: f64 },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("integration aborted at t = {t}: non-finite state (partial trajectory retained)")]
    NonFiniteState {
        t: f64,
        partial: Box<crate::integrate::Trajectory>,
    },
    #[error("zero frequency: the orbit plane is degenerate")]
    DegeneratePlane,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid time grid: {reason}")]
    InvalidTimeGrid { reason: &'static str },
    #[error("exact propagation requires a constant magnetic field")]
    TimeDependentField,
    #[error("cannot normalize a zero {context}")]
    ZeroNorm { context: &'static str },
    #[error("tabulated field is invalid: {reason}")]
    InvalidTable { reason: &'static str },
    #[error("csv format error at line {line}: {reason}")]
    CsvFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
