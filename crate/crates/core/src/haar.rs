//! Haar sampling: uniform sphere points, update coefficients, and the
//! explicit-matrix tower.
//!
//! Two ways to drive a dimension step `n -> n+1`:
//!
//! - matrix mode: sample the target vector `x_{n+1}` uniformly on the sphere of
//!   C^{n+1}, build the reflection `e_{n+1} -> x_{n+1}`, and multiply. Each level
//!   of the tower is then Haar-distributed.
//! - coefficient mode: sample the eigenbasis coefficients `(mu_1..mu_n, nu)` of
//!   `x_{n+1}` directly, uniformly on the sphere of C^{n+1}. This is the same law:
//!   `x_{n+1}` is independent of the eigenbasis of `u_n`, and a unitary change of
//!   basis preserves the uniform sphere measure. No matrix is ever materialized,
//!   which is what makes dimensions in the tens of thousands reachable.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::reflect::{reflection_sending, ComplexVec, Reflection};
use crate::rng::RngStream;
use crate::{Error, Result, C64};

/// Smallest modulus tolerated before a coefficient counts as degenerate.
const DEGENERATE_TOL: f64 = 1e-300;

/// Uniform point on the unit sphere of `C^n`: `n` independent standard complex
/// Gaussians, normalized. Resamples on the measure-zero all-zero draw.
pub fn sample_sphere(n: usize, rng: &mut RngStream) -> ComplexVec {
    assert!(n >= 1, "sphere dimension must be positive");
    loop {
        let v = ComplexVec::new((0..n).map(|_| rng.standard_complex()).collect());
        if let Ok(unit) = v.normalized() {
            return unit;
        }
    }
}

/// Eigenbasis coefficients `(mu_1..mu_n, nu)` of one dimension step, a unit
/// vector in `C^{n+1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateCoeffs {
    pub mu: Vec<C64>,
    pub nu: C64,
}

impl UpdateCoeffs {
    pub fn new(mu: Vec<C64>, nu: C64) -> Self {
        Self { mu, nu }
    }

    /// Dimension of the state being extended.
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.mu.iter().map(|z| z.norm_sqr()).sum::<f64>() + self.nu.norm_sqr()
    }

    /// `mu_k` for a signed index, resolved n-periodically.
    pub fn mu_signed(&self, k: i64) -> C64 {
        let n = self.mu.len() as i64;
        let idx = (k - 1).rem_euclid(n) as usize;
        self.mu[idx]
    }

    fn check_nondegenerate(&self) -> bool {
        self.mu.iter().all(|m| m.norm() >= DEGENERATE_TOL)
            && (C64::new(1.0, 0.0) - self.nu).norm() >= DEGENERATE_TOL
            && self.nu.norm() >= DEGENERATE_TOL
    }
}

/// Samples `(mu_1..mu_n, nu)` uniformly on the unit sphere of `C^{n+1}`.
///
/// The events excluded here (`mu_j = 0`, `nu = 1`) have probability zero; they
/// are resampled once and then treated as hard errors.
pub fn sample_update_coeffs(n: usize, rng: &mut RngStream) -> Result<UpdateCoeffs> {
    assert!(n >= 1);
    for _ in 0..2 {
        let v = sample_sphere(n + 1, rng);
        let entries = v.into_entries();
        let nu = entries[n];
        let coeffs = UpdateCoeffs::new(entries[..n].to_vec(), nu);
        if coeffs.check_nondegenerate() {
            return Ok(coeffs);
        }
    }
    Err(Error::DegenerateCoefficient {
        n,
        what: "mu or 1 - nu below 1e-300 after one resample",
    })
}

/// Run metadata record written next to every experiment output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub generator: String,
    pub mode: String,
    pub n_max: usize,
    pub build_id: String,
}

/// The explicit-matrix tower: reflections `r_1..r_n` and the dense `u_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixTower {
    reflections: Vec<Reflection>,
    u: Array2<C64>,
}

impl Default for MatrixTower {
    fn default() -> Self {
        Self::new()
    }
}

impl MatrixTower {
    pub fn new() -> Self {
        Self {
            reflections: Vec::new(),
            u: Array2::zeros((0, 0)),
        }
    }

    pub fn n(&self) -> usize {
        self.reflections.len()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.u
    }

    pub fn reflections(&self) -> &[Reflection] {
        &self.reflections
    }

    /// Extends the tower by the reflection sending `e_{n+1}` to `x`, and returns
    /// the new dense matrix `u_{n+1} = r_{n+1} diag(u_n, 1)`.
    pub fn extend_with(&mut self, x: &ComplexVec) -> Result<&Array2<C64>> {
        let n1 = self.n() + 1;
        if x.dim() != n1 {
            return Err(Error::DimMismatch {
                expected: n1,
                got: x.dim(),
            });
        }
        let r = reflection_sending(&ComplexVec::basis(n1, n1 - 1), x)?;

        // embed u_n as diag(u_n, 1)
        let mut u = Array2::zeros((n1, n1));
        u.slice_mut(ndarray::s![..n1 - 1, ..n1 - 1]).assign(&self.u);
        u[(n1 - 1, n1 - 1)] = C64::new(1.0, 0.0);

        // left-multiply by the rank-one corrected identity:
        // r M = M - (1-alpha)/<a,a> a (a^H M)
        if let Some((anchor, alpha)) = r.parts() {
            let a = Array1::from(anchor.entries().to_vec());
            let scale = (C64::new(1.0, 0.0) - alpha) / anchor.norm_sqr();
            let ah_m = a.mapv(|z| z.conj()).dot(&u);
            for (i, ai) in a.iter().enumerate() {
                let coef = scale * ai;
                let mut row = u.row_mut(i);
                row.zip_mut_with(&ah_m, |m, w| *m -= coef * w);
            }
        }

        self.u = u;
        self.reflections.push(r);
        Ok(&self.u)
    }

    /// Samples `x_{n+1}` and extends; the new level is Haar on `U(n+1)`.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<&Array2<C64>> {
        let x = sample_sphere(self.n() + 1, rng);
        self.extend_with(&x)
    }

    /// `u_m` reconstructed from the first `m` reflections.
    pub fn level(&self, m: usize) -> Array2<C64> {
        let mut u = Array2::eye(m);
        for col in 0..m {
            let mut x: Vec<C64> = u.column(col).to_vec();
            for r in &self.reflections[..m] {
                r.apply_in_place(&mut x).expect("dims fit");
            }
            for (i, v) in x.into_iter().enumerate() {
                u[(i, col)] = v;
            }
        }
        u
    }
}

/// Convenience: a fresh Haar matrix at dimension `n` (tower built and discarded).
pub fn haar_matrix(n: usize, rng: &mut RngStream) -> Result<Array2<C64>> {
    let mut tower = MatrixTower::new();
    for _ in 0..n {
        tower.step(rng)?;
    }
    Ok(tower.u)
}
