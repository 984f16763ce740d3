//! Dense LAPACK-backed reference computations.
//!
//! Everything here is `O(n^2)` memory / `O(n^3)` time and exists to check the
//! incremental recursion against an independent path: zgeev for spectra, SVD
//! for the rank-one projection property, dense reflection matrices for small
//! algebra tests. None of it is on the hot path.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Norm, SVD};

use crate::reflect::Reflection;
use crate::secular::SpectralState;
use crate::{Result, C64, TAU};

/// Dense matrix of a reflection (test/oracle use only).
pub fn reflection_matrix(r: &Reflection) -> Array2<C64> {
    let n = r.dim();
    let mut m = Array2::eye(n);
    for col in 0..n {
        let mut x: Vec<C64> = m.column(col).to_vec();
        r.apply_in_place(&mut x).expect("dims match");
        for (i, v) in x.into_iter().enumerate() {
            m[(i, col)] = v;
        }
    }
    m
}

/// Dense eigendecomposition of a unitary matrix, angles sorted into `(0, 2pi]`
/// and eigenvector columns reordered to match.
pub fn eig_unitary(u: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let (vals, vecs) = u.eig()?;
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    let angles: Vec<f64> = vals
        .iter()
        .map(|z| {
            let a = z.arg();
            if a > 0.0 {
                a
            } else {
                a + TAU
            }
        })
        .collect();
    order.sort_by(|&i, &j| angles[i].total_cmp(&angles[j]));
    let sorted_angles: Vec<f64> = order.iter().map(|&i| angles[i]).collect();
    let mut sorted_vecs = Array2::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        sorted_vecs.column_mut(k).assign(&vecs.column(i));
    }
    Ok((sorted_angles, sorted_vecs))
}

/// Second-largest singular value of `diag(u_prev, 1) - u_next`; at most one
/// nonzero singular value means the step is a rank-one perturbation.
pub fn rank_one_defect(u_prev: &Array2<C64>, u_next: &Array2<C64>) -> Result<f64> {
    let n = u_prev.nrows();
    let mut emb = Array2::zeros((n + 1, n + 1));
    emb.slice_mut(ndarray::s![..n, ..n]).assign(u_prev);
    emb[(n, n)] = C64::new(1.0, 0.0);
    let diff = &emb - u_next;
    let (_, s, _) = diff.svd(false, false)?;
    Ok(if s.len() > 1 { s[1] } else { 0.0 })
}

/// Max-norm deviation of `u* u` from the identity.
pub fn unitarity_defect(u: &Array2<C64>) -> f64 {
    let n = u.nrows();
    let gram = u.t().mapv(|z| z.conj()).dot(u);
    let eye: Array2<C64> = Array2::eye(n);
    (&gram - &eye).norm_max()
}

/// Comparison of a recursion state against the dense spectrum of `u`.
#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub max_angle_dev: f64,
    /// Max coordinate deviation after per-column phase alignment (FULL mode only).
    pub max_coord_dev: Option<f64>,
    pub max_eigen_residual: Option<f64>,
}

/// Compares recursion angles (and, in FULL mode, eigenvectors up to per-column
/// phase) against zgeev on the dense matrix.
pub fn compare_with_dense(state: &SpectralState, u: &Array2<C64>) -> Result<OracleComparison> {
    let (oracle_angles, oracle_vecs) = eig_unitary(u)?;
    let n = state.n();
    let max_angle_dev = state
        .angles()
        .iter()
        .zip(&oracle_angles)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    let mut max_coord_dev = None;
    let mut max_eigen_residual = None;
    if let Ok(f) = state.full_matrix() {
        let mut dev = 0.0f64;
        for k in 0..n {
            let fk = f.column(k);
            let gk = oracle_vecs.column(k);
            let ip: C64 = fk.iter().zip(gk.iter()).map(|(a, b)| a * b.conj()).sum();
            let phase = if ip.norm() > 0.0 {
                ip / ip.norm()
            } else {
                C64::new(1.0, 0.0)
            };
            for (a, b) in fk.iter().zip(gk.iter()) {
                dev = dev.max((a - b * phase).norm());
            }
        }
        max_coord_dev = Some(dev);

        // residual ||u f_k - lambda_k f_k|| from the recursion's own data
        let uf = u.dot(f);
        let mut resid = 0.0f64;
        for k in 0..n {
            let lam = C64::from_polar(1.0, state.angles()[k]);
            let r: f64 = uf
                .column(k)
                .iter()
                .zip(f.column(k))
                .map(|(a, b)| (a - lam * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            resid = resid.max(r);
        }
        max_eigen_residual = Some(resid);
    }
    Ok(OracleComparison {
        max_angle_dev,
        max_coord_dev,
        max_eigen_residual,
    })
}

/// Applies `u` to a vector given as a slice.
pub fn apply_matrix(u: &Array2<C64>, x: &[C64]) -> Vec<C64> {
    let v = Array1::from(x.to_vec());
    u.dot(&v).to_vec()
}

/// Scaled eigenangles `n theta / 2pi` of a fresh Haar matrix sampled densely,
/// independent of the recursion path (distributional reference).
pub fn dense_haar_scaled_angles(n: usize, rng: &mut crate::rng::RngStream) -> Result<Vec<f64>> {
    let u = crate::haar::haar_matrix(n, rng)?;
    let (angles, _) = eig_unitary(&u)?;
    Ok(angles.iter().map(|t| n as f64 * t / TAU).collect())
}
