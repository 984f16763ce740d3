//! Run configuration: everything an experiment needs to be reproducible.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation mode.
///
/// `Matrix` keeps the explicit reflection tower and dense matrices alongside
/// the spectral recursion (oracle checks, flow residuals; capped at n = 512).
/// `Coeff` samples update coefficients directly in the eigenbasis and never
/// materializes a matrix, which is what makes large dimensions affordable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Matrix,
    Coeff,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Matrix => write!(f, "MATRIX"),
            Mode::Coeff => write!(f, "COEFF"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("n_max must be at least 1")]
    ZeroDimension,
    #[error("MATRIX mode is capped at n_max = 512 (got {0})")]
    MatrixTooLarge(usize),
    #[error("coordinate window L is capped at 64 (got {0})")]
    WindowTooWide(usize),
    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,
    #[error("invalid mode {0:?} (expected MATRIX or COEFF)")]
    BadMode(String),
}

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    pub n_max: usize,
    /// Signed eigenvalue indices to track across dimensions.
    pub k_window: Vec<i64>,
    /// Number of leading coordinates tracked per eigenvector (0 = angles only
    /// in COEFF mode; MATRIX mode always keeps full eigenvectors).
    pub l_coords: usize,
    /// Absolute angle tolerance of the secular root solver.
    pub secular_tol: f64,
    /// Orthonormality budget used by verification passes.
    pub ortho_tol: f64,
    /// Exponent slack of the event-flag thresholds.
    pub epsilon: f64,
    pub out_dir: PathBuf,
    pub ensemble: usize,
    /// Worker threads for seed-level parallelism (0 = all cores).
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: Mode::Coeff,
            n_max: 64,
            k_window: vec![-4, -3, -2, -1, 1, 2, 3, 4],
            l_coords: 8,
            secular_tol: cueflow::secular::DEFAULT_SECULAR_TOL,
            ortho_tol: 1e-9,
            epsilon: 0.1,
            out_dir: PathBuf::from("runs"),
            ensemble: 1,
            parallelism: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_max < 1 {
            return Err(ConfigError::ZeroDimension);
        }
        if self.mode == Mode::Matrix && self.n_max > 512 {
            return Err(ConfigError::MatrixTooLarge(self.n_max));
        }
        if self.l_coords > 64 {
            return Err(ConfigError::WindowTooWide(self.l_coords));
        }
        if self.ensemble < 1 {
            return Err(ConfigError::EmptyEnsemble);
        }
        Ok(())
    }

    /// Hash of the canonical JSON encoding; embedded in every output file and
    /// checked on resume. Only scientific parameters count: the output
    /// location and the parallelism degree do not change what is computed.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.out_dir = PathBuf::new();
        semantic.parallelism = 0;
        let json = serde_json::to_string(&semantic).expect("config serializes");
        format!("{:016x}", crate::fnv1a(json.as_bytes()))
    }

    pub fn meta(&self) -> cueflow::haar::RunMeta {
        cueflow::haar::RunMeta {
            seed: self.seed,
            generator: cueflow::rng::GENERATOR_NAME.to_string(),
            mode: self.mode.to_string(),
            n_max: self.n_max,
            build_id: crate::build_id(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_guards() {
        let mut c = RunConfig::default();
        c.n_max = 0;
        assert!(matches!(c.validate(), Err(ConfigError::ZeroDimension)));
        c.n_max = 1024;
        c.mode = Mode::Matrix;
        assert!(matches!(c.validate(), Err(ConfigError::MatrixTooLarge(_))));
        c.mode = Mode::Coeff;
        c.l_coords = 100;
        assert!(matches!(c.validate(), Err(ConfigError::WindowTooWide(_))));
        c.l_coords = 8;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
