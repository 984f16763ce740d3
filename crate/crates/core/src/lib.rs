//! Incremental spectral analysis of coupled Haar-unitary matrices.
//!
//! A tower `(u_n)_{n >= 1}` of unitary matrices, with `u_{n+1} = r_{n+1} diag(u_n, 1)`
//! for complex reflections `r_n`, is Haar-distributed at every level when each
//! `r_n(e_n)` is uniform on the unit sphere of C^n. This crate builds such towers
//! and maintains their eigenvalues and eigenvectors *incrementally*: one dimension
//! step costs one secular-equation solve plus a Cauchy-type matrix application,
//! instead of a fresh `O(n^3)` eigendecomposition.
//!
//! The main pieces:
//!
//! - [`reflect`]: complex vectors and complex reflections `r_{a,alpha}`.
//! - [`rng`]: seeded, stream-split randomness (deterministic per `(seed, step, purpose)`).
//! - [`haar`]: uniform sphere sampling and Haar tower construction, in explicit
//!   matrix form or directly in eigenbasis coordinates.
//! - [`secular`]: the interlacing secular-equation solver and the eigenvector update.
//! - [`eigenpath`]: per-index trajectories of renormalized eigenangles and
//!   eigenvector coordinates across dimensions.
//! - [`flow`]: the limiting diagonal flow acting on eigenpath combinations,
//!   finite-n residuals against matrix powers, and averaged inner products.
//! - [`stats`]: kernels, correlation determinants, gap probabilities, and
//!   Monte-Carlo distributional tests.
//! - [`oracle`]: dense LAPACK-based reference computations for tests and the
//!   `--oracle` verification path.

pub mod eigenpath;
pub mod error;
pub mod flow;
pub mod haar;
pub mod oracle;
pub mod reflect;
pub mod rng;
pub mod secular;
pub mod stats;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// 2 pi.
pub const TAU: f64 = 2.0 * std::f64::consts::PI;
