//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("reflection anchor has zero norm")]
    ZeroAnchor,

    #[error("reflection phase has modulus {modulus} (must be 1 within 1e-12)")]
    NonUnitPhase { modulus: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("input vector norm {norm} deviates from 1 beyond tolerance")]
    NonUnitInput { norm: f64 },

    #[error("degenerate update coefficient at step {n}: {what}")]
    DegenerateCoefficient { n: usize, what: &'static str },

    #[error("operation requires {required} eigenvector mode, state has {got}")]
    ModeError {
        required: &'static str,
        got: &'static str,
    },

    #[error("secular function evaluated within {dist:e} of a pole")]
    PoleEvaluation { dist: f64 },

    #[error("secular bracket failure on arc {arc}: sign structure violated")]
    BracketFailure { arc: usize },

    #[error("secular root {arc} did not converge after {iters} iterations")]
    NonConvergence { arc: usize, iters: usize },

    #[error("ill-conditioned recovery solve: residual {residual:e} exceeds {limit:e}")]
    IllConditioned { residual: f64, limit: f64 },

    #[error("index k={k} not resolvable at dimension n={n}")]
    IndexUnresolvable { k: i64, n: usize },

    #[error("insufficient samples: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("degenerate interval [{a}, {b}]")]
    DegenerateInterval { a: f64, b: f64 },

    #[error("trace moment window violated: 2*j = {two_j} exceeds n = {n}")]
    WindowViolation { two_j: usize, n: usize },

    #[error("Abel truncation too coarse: tail bound {bound:e} exceeds 1e-12")]
    TruncationTooCoarse { bound: f64 },

    #[error("quadrature too coarse: {nodes} nodes for truncation degree {degree}")]
    QuadratureTooCoarse { nodes: usize, degree: usize },

    #[error("linear algebra backend error: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
