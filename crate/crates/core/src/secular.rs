//! Incremental spectral updates through the secular equation.
//!
//! One dimension step `n -> n+1` of the tower replaces the eigenvalues
//! `lambda_j = exp(i theta_j)` of `u_n` by the `n+1` roots of
//!
//! ```text
//!   sum_j |mu_j|^2 lambda_j/(lambda_j - z) + |1 - nu|^2/(1 - z) = 1 - conj(nu)
//! ```
//!
//! on the unit circle. Writing `z = exp(it)` and using that the rearranged
//! rational function is purely imaginary on the circle, the equation reduces to
//! the real, strictly increasing (per arc) form
//!
//! ```text
//!   s(t) = sum_j |mu_j|^2 cot((theta_j - t)/2) - |1 - nu|^2 cot(t/2) + 2 Im(nu)
//! ```
//!
//! with one simple pole at every old angle and at 0. Each arc of the partition
//! `(0,theta_1) u (theta_1,theta_2) u ... u (theta_n, 2pi)` carries exactly one
//! root, so the new angles strictly interlace the old ones and the point 1.
//! Eigenvectors update through a Cauchy-type matrix in the old eigenbasis:
//!
//! ```text
//!   h_k^{1/2} f'_k = sum_j mu_j/(lambda_j - lambda'_k) f_j + (nu - 1)/(1 - lambda'_k) e_{n+1}
//! ```
//!
//! where `h_k = sum_j |mu_j|^2/|lambda_j - lambda'_k|^2 + |nu - 1|^2/|1 - lambda'_k|^2`
//! normalizes `f'_k` to unit length (numerically it equals `s'(root)/2`, which the
//! solver gets for free from its final Newton evaluation).

use ndarray::{s, Array1, Array2};
use ndarray_linalg::Solve;
use serde::{Deserialize, Serialize};

use crate::haar::UpdateCoeffs;
use crate::reflect::ComplexVec;
use crate::{Error, Result, C64, TAU};

/// Default absolute angle tolerance of the root solver.
pub const DEFAULT_SECULAR_TOL: f64 = 1e-13;

/// Minimum distance kept between an evaluation point and a pole.
const POLE_GUARD: f64 = 1e-15 * TAU;

/// Roots closer than this to a pole indicate degenerate input.
const ROOT_POLE_LIMIT: f64 = 1e-14;

const MAX_ITERS: usize = 200;

/// Eigenvector payload of a spectral state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Eigvecs {
    /// `n x n`, column `k-1` holds `f_k` in the standard basis
    /// (`<f_k, e_l>` at row `l-1`).
    Full(Array2<C64>),
    /// `n x L` slab; entry `(k-1, l-1)` is `<f_k, e_l>`, tracking the first
    /// `L = min(n, l_max)` coordinates of every eigenvector.
    Coords(Array2<C64>),
    /// Angles only.
    None,
}

impl Eigvecs {
    pub fn mode_name(&self) -> &'static str {
        match self {
            Eigvecs::Full(_) => "FULL",
            Eigvecs::Coords(_) => "COORDS",
            Eigvecs::None => "NONE",
        }
    }
}

/// Spectral data of one tower level: strictly ordered eigenangles in `(0, 2pi)`
/// plus eigenvector data. Signed indices resolve through the n-periodic
/// extension `theta_{k+n} = theta_k + 2pi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralState {
    n: usize,
    angles: Vec<f64>,
    eigvecs: Eigvecs,
    /// Phases follow the recursion with `f_1^{(1)} = -e_1`.
    phase_fixed: bool,
}

impl SpectralState {
    /// State of the 1x1 tower level `u_1 = (x_1)`, with the `f_1 = -e_1` phase
    /// convention. `l_max` sizes the coordinate slab in COORDS mode.
    pub fn initial(x1: C64, mode: StateMode, _l_max: usize) -> Result<Self> {
        let mut theta = x1.arg();
        if theta < 0.0 {
            theta += TAU;
        }
        if theta <= 0.0 || theta >= TAU {
            return Err(Error::DegenerateCoefficient {
                n: 1,
                what: "u_1 has eigenvalue 1",
            });
        }
        let minus_one = C64::new(-1.0, 0.0);
        let eigvecs = match mode {
            StateMode::Full => Eigvecs::Full(Array2::from_elem((1, 1), minus_one)),
            StateMode::Coords => Eigvecs::Coords(Array2::from_elem((1, 1), minus_one)),
            StateMode::None => Eigvecs::None,
        };
        Ok(Self {
            n: 1,
            angles: vec![theta],
            eigvecs,
            phase_fixed: true,
        })
    }

    pub fn from_parts(angles: Vec<f64>, eigvecs: Eigvecs, phase_fixed: bool) -> Self {
        let n = angles.len();
        debug_assert!(angles.windows(2).all(|w| w[0] < w[1]));
        Self {
            n,
            angles,
            eigvecs,
            phase_fixed,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn eigvecs(&self) -> &Eigvecs {
        &self.eigvecs
    }

    pub fn phase_fixed(&self) -> bool {
        self.phase_fixed
    }

    /// Resolves a signed index to the 1-based row `1..=n` and the angle shift
    /// (a multiple of `2pi`) of the periodic extension.
    pub fn resolve_index(&self, k: i64) -> Result<(usize, f64)> {
        let n = self.n as i64;
        if k.abs() > n {
            return Err(Error::IndexUnresolvable { k, n: self.n });
        }
        let idx = (k - 1).rem_euclid(n) as usize;
        let wraps = (k - 1).div_euclid(n) as f64;
        Ok((idx + 1, wraps * TAU))
    }

    /// `theta_k` for a signed index, in the periodic extension.
    pub fn angle_signed(&self, k: i64) -> Result<f64> {
        let (idx, shift) = self.resolve_index(k)?;
        Ok(self.angles[idx - 1] + shift)
    }

    /// `lambda_k = exp(i theta_k)`; genuinely n-periodic in `k`.
    pub fn lambda_signed(&self, k: i64) -> Result<C64> {
        let (idx, _) = self.resolve_index(k)?;
        Ok(C64::from_polar(1.0, self.angles[idx - 1]))
    }

    /// `<f_k, e_l>` for 1-based `row k`, coordinate `l`, in FULL or COORDS mode.
    pub fn coord(&self, k: usize, l: usize) -> Result<C64> {
        match &self.eigvecs {
            Eigvecs::Full(f) => Ok(f[(l - 1, k - 1)]),
            Eigvecs::Coords(slab) => {
                if l > slab.ncols() {
                    return Err(Error::ModeError {
                        required: "COORDS slab wide enough",
                        got: "narrower slab",
                    });
                }
                Ok(slab[(k - 1, l - 1)])
            }
            Eigvecs::None => Err(Error::ModeError {
                required: "FULL or COORDS",
                got: "NONE",
            }),
        }
    }

    /// Full eigenvector matrix, if present.
    pub fn full_matrix(&self) -> Result<&Array2<C64>> {
        match &self.eigvecs {
            Eigvecs::Full(f) => Ok(f),
            other => Err(Error::ModeError {
                required: "FULL",
                got: other.mode_name(),
            }),
        }
    }
}

/// Which eigenvector payload a trajectory maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateMode {
    Full,
    Coords,
    None,
}

/// Outcome of one secular solve: the `n+1` interlacing roots, per-root
/// diagnostics, and the normalizers `h_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecularSolveReport {
    pub new_angles: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<u32>,
    pub h: Vec<f64>,
}

/// Precomputed evaluation data for `s(t)` over one step.
pub struct SecularParams {
    cos_th: Vec<f64>,
    sin_th: Vec<f64>,
    mu_sqr: Vec<f64>,
    /// `|1 - nu|^2`
    c0: f64,
    /// `2 Im(nu)`
    im2: f64,
    angles: Vec<f64>,
}

/// Below this count every term takes the accurate trigonometric path.
const ACCURATE_ALL: usize = 16;
/// Angular radius around `t` inside which the fast form is replaced by the
/// exact-trig form (the fast numerator and denominator lose ~eps/delta
/// relative accuracy as `t` approaches a pole).
const NEAR_WINDOW: f64 = 2e-4;
/// Guards the division against a literal zero denominator; squared chord
/// distances at the pole-guard radius are ~1e-29, far above this.
const DEN_CLAMP: f64 = 1e-250;

/// Fast secular term: `|lambda - z|^2 = dr^2 + di^2` is exactly the squared
/// chord, computed the way `num_complex` division computes it, and
/// `cot((theta-t)/2) = 2 sin(theta-t) / |lambda - z|^2`. Returns the value
/// term and the normalizer term `mu^2 / |lambda - z|^2`.
#[inline(always)]
fn fast_pair(cos_th: f64, sin_th: f64, mu2: f64, ct: f64, st: f64) -> (f64, f64) {
    let dr = cos_th - ct;
    let di = sin_th - st;
    let sn = sin_th * ct - cos_th * st;
    let den = (dr * dr + di * di).max(DEN_CLAMP);
    let w = mu2 / den;
    (w * (sn + sn), w)
}

/// `theta - t` wrapped into `(-pi, pi]`; `cot((theta - t)/2)` is pi-periodic so
/// the wrap is exact.
#[inline]
fn wrapped_delta(theta: f64, t: f64) -> f64 {
    let d = theta - t;
    if d > std::f64::consts::PI {
        d - TAU
    } else if d <= -std::f64::consts::PI {
        d + TAU
    } else {
        d
    }
}

impl SecularParams {
    pub fn new(angles: &[f64], mu_sqr: &[f64], nu: C64) -> Self {
        // .cos()/.sin() separately, matching from_polar bit for bit: the
        // normalizer's denominators must equal the eigenvector update's exactly
        let cos_th = angles.iter().map(|t| t.cos()).collect();
        let sin_th = angles.iter().map(|t| t.sin()).collect();
        Self {
            cos_th,
            sin_th,
            mu_sqr: mu_sqr.to_vec(),
            c0: (C64::new(1.0, 0.0) - nu).norm_sqr(),
            im2: 2.0 * nu.im,
            angles: angles.to_vec(),
        }
    }

    fn distance_to_pole(&self, t: f64) -> f64 {
        let mut d = t.min(TAU - t).abs();
        for th in &self.angles {
            d = d.min((t - th).abs());
        }
        d
    }

    /// Index ranges whose angles lie within the near window of `t`, including
    /// the wrap-around through 0 / 2pi.
    fn near_ranges(&self, t: f64) -> [(usize, usize); 3] {
        let n = self.angles.len();
        if n <= ACCURATE_ALL {
            return [(0, n), (0, 0), (0, 0)];
        }
        let lo = self.angles.partition_point(|&a| a < t - NEAR_WINDOW);
        let hi = self.angles.partition_point(|&a| a <= t + NEAR_WINDOW);
        let mut wrap_lo = (0, 0);
        let mut wrap_hi = (0, 0);
        if t - NEAR_WINDOW < 0.0 {
            let start = self.angles.partition_point(|&a| a < t - NEAR_WINDOW + TAU);
            wrap_lo = (start, n);
        }
        if t + NEAR_WINDOW > TAU {
            let end = self.angles.partition_point(|&a| a <= t + NEAR_WINDOW - TAU);
            wrap_hi = (0, end);
        }
        [(lo, hi), wrap_lo, wrap_hi]
    }

    /// Replaces the fast-form value contribution of the near indices by the
    /// accurate `1/tan((theta - t)/2)` form (value component only; the
    /// normalizer keeps the chord denominators by construction).
    fn near_value_correction(&self, t: f64, ct: f64, st: f64) -> f64 {
        let mut dv = 0.0;
        for &(a, b) in self.near_ranges(t).iter() {
            for j in a..b {
                let (fv, _) = fast_pair(self.cos_th[j], self.sin_th[j], self.mu_sqr[j], ct, st);
                let half = 0.5 * wrapped_delta(self.angles[j], t);
                let (sh, chh) = half.sin_cos();
                dv += self.mu_sqr[j] * chh / sh - fv;
            }
        }
        dv
    }

    /// The pole-at-1 value term `-|1-nu|^2 cot(t/2)` via half-angle trig, and
    /// its normalizer term `|1-nu|^2 / |1 - e^{it}|^2` via the chord form.
    fn origin_terms(&self, t: f64, ct: f64, st: f64) -> (f64, f64) {
        let half = 0.5 * t;
        let (sh, chh) = half.sin_cos();
        let dr = 1.0 - ct;
        (-self.c0 * chh / sh, self.c0 / (dr * dr + st * st))
    }

    /// `s(t)`: vectorized fast terms with pairwise (tree) summation, near-pole
    /// terms corrected through the accurate path.
    pub fn value(&self, t: f64) -> f64 {
        let (ct, st) = (t.cos(), t.sin());
        let sum = sum_value_terms(&self.cos_th, &self.sin_th, &self.mu_sqr, ct, st);
        let dv = self.near_value_correction(t, ct, st);
        let (origin_v, _) = self.origin_terms(t, ct, st);
        sum + dv + origin_v + self.im2
    }

    /// `(s(t), h(t))` in one pass; `h` is the eigenvector normalizer, equal to
    /// `s'(t)/2` at any `t`, with denominators matching the complex divisions
    /// of the eigenvector update bit for bit.
    pub fn value_normalizer(&self, t: f64) -> (f64, f64) {
        let (ct, st) = (t.cos(), t.sin());
        let (sum, hsum) = sum_value_h_terms(&self.cos_th, &self.sin_th, &self.mu_sqr, ct, st);
        let dv = self.near_value_correction(t, ct, st);
        let (origin_v, origin_h) = self.origin_terms(t, ct, st);
        (sum + dv + origin_v + self.im2, hsum + origin_h)
    }

    /// `(s(t), s'(t), h(t))`, with `s' = 2h`.
    pub fn value_deriv(&self, t: f64) -> (f64, f64, f64) {
        let (v, h) = self.value_normalizer(t);
        (v, 2.0 * h, h)
    }

    /// The normalizer alone (see [`Self::value_normalizer`]).
    pub fn normalizer(&self, t: f64) -> f64 {
        self.value_normalizer(t).1
    }
}

const CHUNK: usize = 64;

/// Allocation-free pairwise (tree) summation: chunk subtotals merge like binary
/// carries, so round-off grows with the tree depth instead of the term count.
struct TreeSum {
    partial: [f64; 40],
    count: u64,
}

impl TreeSum {
    fn new() -> Self {
        Self {
            partial: [0.0; 40],
            count: 0,
        }
    }

    #[inline]
    fn push(&mut self, mut value: f64) {
        let mut level = 0;
        let mut c = self.count;
        while c & 1 == 1 {
            value += self.partial[level];
            level += 1;
            c >>= 1;
        }
        self.partial[level] = value;
        self.count += 1;
    }

    fn finish(self) -> f64 {
        let mut acc = 0.0;
        let mut c = self.count;
        let mut level = 0;
        while c != 0 {
            if c & 1 == 1 {
                acc += self.partial[level];
            }
            level += 1;
            c >>= 1;
        }
        acc
    }
}

/// Sum of the fast secular value terms in 64-blocks of 8 lanes (the shape the
/// vectorizer turns into full-width SIMD).
#[doc(hidden)]
pub fn sum_value_terms(cos_th: &[f64], sin_th: &[f64], mu2: &[f64], ct: f64, st: f64) -> f64 {
    let mut tree = TreeSum::new();
    let n = mu2.len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let (c, s, m) = (
            &cos_th[start..end],
            &sin_th[start..end],
            &mu2[start..end],
        );
        let mut acc = [0.0f64; 8];
        let mut iter = c
            .chunks_exact(8)
            .zip(s.chunks_exact(8))
            .zip(m.chunks_exact(8));
        for ((c8, s8), m8) in iter.by_ref() {
            for lane in 0..8 {
                acc[lane] += fast_pair(c8[lane], s8[lane], m8[lane], ct, st).0;
            }
        }
        for i in (end - start) / 8 * 8..end - start {
            acc[0] += fast_pair(c[i], s[i], m[i], ct, st).0;
        }
        tree.push(((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])));
        start = end;
    }
    tree.finish()
}

/// Same sweep accumulating the value and the normalizer together.
fn sum_value_h_terms(
    cos_th: &[f64],
    sin_th: &[f64],
    mu2: &[f64],
    ct: f64,
    st: f64,
) -> (f64, f64) {
    let mut tree = TreeSum::new();
    let mut h_tree = TreeSum::new();
    let n = mu2.len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let (c, s, m) = (
            &cos_th[start..end],
            &sin_th[start..end],
            &mu2[start..end],
        );
        let mut acc = [0.0f64; 8];
        let mut hacc = [0.0f64; 8];
        let mut iter = c
            .chunks_exact(8)
            .zip(s.chunks_exact(8))
            .zip(m.chunks_exact(8));
        for ((c8, s8), m8) in iter.by_ref() {
            for lane in 0..8 {
                let (v, h) = fast_pair(c8[lane], s8[lane], m8[lane], ct, st);
                acc[lane] += v;
                hacc[lane] += h;
            }
        }
        for i in (end - start) / 8 * 8..end - start {
            let (v, h) = fast_pair(c[i], s[i], m[i], ct, st);
            acc[0] += v;
            hacc[0] += h;
        }
        tree.push(((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])));
        h_tree.push(
            ((hacc[0] + hacc[1]) + (hacc[2] + hacc[3]))
                + ((hacc[4] + hacc[5]) + (hacc[6] + hacc[7])),
        );
        start = end;
    }
    (tree.finish(), h_tree.finish())
}

/// Evaluates the real secular function `s(t)` away from its poles.
pub fn secular_function(t: f64, angles: &[f64], coeffs: &UpdateCoeffs) -> Result<f64> {
    let mu_sqr: Vec<f64> = coeffs.mu.iter().map(|m| m.norm_sqr()).collect();
    let params = SecularParams::new(angles, &mu_sqr, coeffs.nu);
    let dist = params.distance_to_pole(t);
    if dist < 1e-13 {
        return Err(Error::PoleEvaluation { dist });
    }
    Ok(params.value(t))
}

/// The complex rational form the real `s(t)` must reproduce: `2i Phi(e^{it})` with
///
/// ```text
///   Phi(z) = sum_j |mu_j|^2 lambda_j/(lambda_j - z) + |nu - 1|^2/(1 - z) - (1 - conj nu)
/// ```
///
/// Test-only cross-check of the algebraic reduction.
pub fn secular_complex_form(t: f64, angles: &[f64], coeffs: &UpdateCoeffs) -> C64 {
    let z = C64::from_polar(1.0, t);
    let one = C64::new(1.0, 0.0);
    let mut phi = C64::new(0.0, 0.0);
    for (theta, mu) in angles.iter().zip(&coeffs.mu) {
        let lambda = C64::from_polar(1.0, *theta);
        phi += mu.norm_sqr() * lambda / (lambda - z);
    }
    phi += (coeffs.nu - one).norm_sqr() / (one - z);
    phi -= one - coeffs.nu.conj();
    C64::new(0.0, 2.0) * phi
}

/// Solves the secular equation: one root per arc, located by bisection to
/// `1e-3` of the arc width (seeded at the warm-start estimate
/// `theta_k (1 - |mu_k|^2)`) followed by bracket-safeguarded Newton.
pub fn solve_secular(
    state: &SpectralState,
    coeffs: &UpdateCoeffs,
    tol: f64,
) -> Result<SecularSolveReport> {
    if coeffs.n() != state.n() {
        return Err(Error::DimMismatch {
            expected: state.n(),
            got: coeffs.n(),
        });
    }
    let mu_sqr: Vec<f64> = coeffs.mu.iter().map(|m| m.norm_sqr()).collect();
    solve_secular_raw(state.angles(), &mu_sqr, coeffs.nu, tol)
}

/// Core solver on raw angle and modulus data.
pub fn solve_secular_raw(
    angles: &[f64],
    mu_sqr: &[f64],
    nu: C64,
    tol: f64,
) -> Result<SecularSolveReport> {
    let n = angles.len();
    for (j, m2) in mu_sqr.iter().enumerate() {
        if *m2 <= 0.0 {
            return Err(Error::DegenerateCoefficient {
                n: j + 1,
                what: "mu_j = 0 entering secular solve",
            });
        }
    }
    if (C64::new(1.0, 0.0) - nu).norm() == 0.0 {
        return Err(Error::DegenerateCoefficient {
            n,
            what: "nu = 1 entering secular solve",
        });
    }
    let params = SecularParams::new(angles, mu_sqr, nu);

    let mut new_angles = Vec::with_capacity(n + 1);
    let mut residuals = Vec::with_capacity(n + 1);
    let mut iterations = Vec::with_capacity(n + 1);
    let mut h = Vec::with_capacity(n + 1);

    for arc in 0..=n {
        let left = if arc == 0 { 0.0 } else { angles[arc - 1] };
        let right = if arc == n { TAU } else { angles[arc] };
        let width = right - left;
        if width <= 4.0 * POLE_GUARD {
            return Err(Error::BracketFailure { arc });
        }

        // The angle-estimate lemma puts root k at distance ~ theta_k |mu_k|^2
        // below theta_k; on the last arc the mirrored form hugs the left pole.
        let (hug_right, gap_est) = if arc < n {
            (true, angles[arc] * mu_sqr[arc])
        } else {
            (false, (TAU - angles[n - 1]) * mu_sqr[n - 1])
        };

        let (root, resid, iters, h_root) = solve_arc(&params, left, right, hug_right, gap_est, tol)
            .map_err(|e| match e {
                Error::BracketFailure { .. } => Error::BracketFailure { arc },
                Error::NonConvergence { iters, .. } => Error::NonConvergence { arc, iters },
                other => other,
            })?;
        if (root - left).min(right - root) < ROOT_POLE_LIMIT {
            return Err(Error::BracketFailure { arc });
        }
        new_angles.push(root);
        residuals.push(resid);
        iterations.push(iters);
        h.push(h_root);
    }

    debug_assert!(interlaces(angles, &new_angles));
    Ok(SecularSolveReport {
        new_angles,
        residuals,
        iterations,
        h,
    })
}

fn solve_arc(
    params: &SecularParams,
    left: f64,
    right: f64,
    hug_right: bool,
    gap_est: f64,
    tol: f64,
) -> Result<(f64, f64, u32, f64)> {
    let mut lo = left + POLE_GUARD;
    let mut hi = right - POLE_GUARD;
    let width = right - left;
    let mut iters: u32 = 0;
    // s runs from -inf to +inf across the arc; the explicit sign check is kept
    // at small n where it is cheap, larger dimensions rely on the upfront
    // degeneracy screening plus the non-convergence guard
    if params.mu_sqr.len() <= 64 {
        if params.value(lo) >= 0.0 || params.value(hi) <= 0.0 {
            return Err(Error::BracketFailure { arc: 0 });
        }
        iters = 2;
    }

    // bisection phase: halve the bracket down to 1/8 of the arc, enough for
    // the safeguarded Newton below to take over
    while hi - lo > width / 8.0 && (iters as usize) < MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if params.value(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }

    // Newton with bracket safeguarding, taken in the pole-adapted variable
    // x = cot((p - t)/2) for the nearer pole p: the dominant near-pole term is
    // linear in x, so steps neither stall nor overshoot approaching the pole.
    // The warm start seeds the phase; rejected steps bisect instead. The
    // returned root, residual, and normalizer come from one final evaluation.
    let warm = if hug_right {
        right - gap_est
    } else {
        left + gap_est
    };
    let mut t = if warm > lo && warm < hi {
        warm
    } else {
        0.5 * (lo + hi)
    };
    loop {
        // slope through the identity s'(t) = 2 h(t); the final evaluation's
        // h is exactly the normalizer to report for this root
        let (v, h_t) = params.value_normalizer(t);
        let d = 2.0 * h_t;
        iters += 1;
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // the proposed Newton step is the error estimate; the bracket width
        // bounds it when evaluations sit at the noise floor
        if v == 0.0 || (v / d).abs() <= tol || hi - lo <= tol {
            return Ok((t, v.abs(), iters, h_t));
        }
        if iters as usize >= MAX_ITERS {
            return Err(Error::NonConvergence {
                arc: 0,
                iters: iters as usize,
            });
        }
        let pole = if t - left < right - t { left } else { right };
        let u = 0.5 * (pole - t);
        let next = if u.abs() < 0.75 {
            // x-space Newton: x' = x - v (1 + x^2)/(2 d), t' = pole - 2 atan(1/x')
            let x = u.cos() / u.sin();
            let x_next = x - v * (1.0 + x * x) / (2.0 * d);
            pole - 2.0 * (1.0 / x_next).atan()
        } else {
            t - v / d
        };
        t = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
}

/// Strict interlacing `0 < t'_1 < t_1 < t'_2 < ... < t_n < t'_{n+1} < 2pi`.
pub fn interlaces(old: &[f64], new: &[f64]) -> bool {
    if new.len() != old.len() + 1 {
        return false;
    }
    if !(new[0] > 0.0 && *new.last().unwrap() < TAU) {
        return false;
    }
    old.iter()
        .enumerate()
        .all(|(i, &t)| new[i] < t && t < new[i + 1])
}

/// Expands a unit vector `x in C^{n+1}` over the eigenbasis of a FULL state:
/// `mu_j = <x, f_j>`, `nu` = last coordinate.
pub fn decompose_in_eigenbasis(x: &ComplexVec, state: &SpectralState) -> Result<UpdateCoeffs> {
    let f = state.full_matrix()?;
    let n = state.n();
    if x.dim() != n + 1 {
        return Err(Error::DimMismatch {
            expected: n + 1,
            got: x.dim(),
        });
    }
    let norm = x.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NonUnitInput { norm });
    }
    let xs = x.entries();
    let mu = (0..n)
        .map(|j| {
            (0..n)
                .map(|l| xs[l] * f[(l, j)].conj())
                .sum::<C64>()
        })
        .collect();
    Ok(UpdateCoeffs::new(mu, xs[n]))
}

/// Cauchy weights `w_{jk} = mu_j / (lambda_j - lambda'_k)` as an
/// `n x (n+1)` matrix.
fn cauchy_weights(
    old_angles: &[f64],
    new_angles: &[f64],
    mu: &[C64],
) -> Array2<C64> {
    let n = old_angles.len();
    let lambdas: Vec<C64> = old_angles.iter().map(|t| C64::from_polar(1.0, *t)).collect();
    let new_lambdas: Vec<C64> = new_angles.iter().map(|t| C64::from_polar(1.0, *t)).collect();
    Array2::from_shape_fn((n, n + 1), |(j, k)| mu[j] / (lambdas[j] - new_lambdas[k]))
}

/// Updates a FULL eigenvector matrix across one step. Output column `k` is
/// `f'_k = h_k^{-1/2} [ sum_j w_{jk} f_j + (nu-1)/(1-lambda'_k) e_{n+1} ]`.
pub fn update_eigenvectors(
    state: &SpectralState,
    coeffs: &UpdateCoeffs,
    report: &SecularSolveReport,
) -> Result<SpectralState> {
    let f = state.full_matrix()?;
    let n = state.n();
    let w = cauchy_weights(state.angles(), &report.new_angles, &coeffs.mu);
    let top = f.dot(&w); // n x (n+1)

    let mut out = Array2::zeros((n + 1, n + 1));
    out.slice_mut(s![..n, ..]).assign(&top);
    let one = C64::new(1.0, 0.0);
    for k in 0..=n {
        let lam_new = C64::from_polar(1.0, report.new_angles[k]);
        out[(n, k)] = (coeffs.nu - one) / (one - lam_new);
    }
    for k in 0..=n {
        let scale = C64::new(1.0 / report.h[k].sqrt(), 0.0);
        out.column_mut(k).mapv_inplace(|z| z * scale);
    }
    Ok(SpectralState::from_parts(
        report.new_angles.clone(),
        Eigvecs::Full(out),
        state.phase_fixed(),
    ))
}

/// Updates an `n x L` coordinate slab (`L <= n`) across one step; row `k` of the
/// result holds the first `L` coordinates of `f'_k`. The `e_{n+1}` term has no
/// component on coordinates `<= L <= n`, so only the Cauchy part contributes.
pub fn update_coordinates(
    slab: &Array2<C64>,
    coeffs: &UpdateCoeffs,
    old_angles: &[f64],
    report: &SecularSolveReport,
) -> Result<Array2<C64>> {
    let n = old_angles.len();
    let l = slab.ncols();
    if slab.nrows() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: slab.nrows(),
        });
    }
    if l > n {
        return Err(Error::ModeError {
            required: "slab width L <= n",
            got: "L > n",
        });
    }
    // premultiply rows by mu_j, split into flat real/imag planes
    let mut pre_re = vec![0.0f64; n * l];
    let mut pre_im = vec![0.0f64; n * l];
    // coordinate-major planes: the j-sweep per coordinate is contiguous
    for j in 0..n {
        let m = coeffs.mu[j];
        for (li, z) in slab.row(j).iter().enumerate() {
            let w = m * z;
            pre_re[li * n + j] = w.re;
            pre_im[li * n + j] = w.im;
        }
    }
    let cos_th: Vec<f64> = old_angles.iter().map(|t| t.cos()).collect();
    let sin_th: Vec<f64> = old_angles.iter().map(|t| t.sin()).collect();

    // per new angle: reciprocal field 1/(lambda_j - lambda'_k), then one pass
    // per tracked coordinate; everything stays in flat lanes the vectorizer likes
    let mut rec_re = vec![0.0f64; n];
    let mut rec_im = vec![0.0f64; n];
    let mut out = Array2::zeros((n + 1, l));
    for k in 0..=n {
        let (ck, sk) = (report.new_angles[k].cos(), report.new_angles[k].sin());
        {
            let mut iter = rec_re
                .chunks_exact_mut(8)
                .zip(rec_im.chunks_exact_mut(8))
                .zip(cos_th.chunks_exact(8))
                .zip(sin_th.chunks_exact(8));
            for (((r8, i8), c8), s8) in iter.by_ref() {
                for lane in 0..8 {
                    let dr = c8[lane] - ck;
                    let di = s8[lane] - sk;
                    let inv = 1.0 / (dr * dr + di * di);
                    r8[lane] = dr * inv;
                    i8[lane] = -di * inv;
                }
            }
            for j in n / 8 * 8..n {
                let dr = cos_th[j] - ck;
                let di = sin_th[j] - sk;
                let inv = 1.0 / (dr * dr + di * di);
                rec_re[j] = dr * inv;
                rec_im[j] = -di * inv;
            }
        }
        let scale = 1.0 / report.h[k].sqrt();
        for li in 0..l {
            let (pr_lane, pi_lane) = (&pre_re[li * n..li * n + n], &pre_im[li * n..li * n + n]);
            let mut acc_re = [0.0f64; 4];
            let mut acc_im = [0.0f64; 4];
            let mut iter = pr_lane
                .chunks_exact(4)
                .zip(pi_lane.chunks_exact(4))
                .zip(rec_re.chunks_exact(4))
                .zip(rec_im.chunks_exact(4));
            for (((p4, q4), r4), s4) in iter.by_ref() {
                for lane in 0..4 {
                    acc_re[lane] += p4[lane] * r4[lane] - q4[lane] * s4[lane];
                    acc_im[lane] += p4[lane] * s4[lane] + q4[lane] * r4[lane];
                }
            }
            for j in n / 4 * 4..n {
                acc_re[0] += pr_lane[j] * rec_re[j] - pi_lane[j] * rec_im[j];
                acc_im[0] += pr_lane[j] * rec_im[j] + pi_lane[j] * rec_re[j];
            }
            out[(k, li)] = C64::new(
                acc_re.iter().sum::<f64>() * scale,
                acc_im.iter().sum::<f64>() * scale,
            );
        }
    }
    Ok(out)
}

/// One full state step. In COORDS mode the slab grows by the new coordinate
/// `l = n+1` while `n+1 <= l_max`, whose only contribution is the `e_{n+1}` term.
pub fn advance_state(
    state: &SpectralState,
    coeffs: &UpdateCoeffs,
    report: &SecularSolveReport,
    l_max: usize,
) -> Result<SpectralState> {
    let n = state.n();
    match state.eigvecs() {
        Eigvecs::Full(_) => update_eigenvectors(state, coeffs, report),
        Eigvecs::Coords(slab) => {
            let mut new_slab = update_coordinates(slab, coeffs, state.angles(), report)?;
            if n + 1 <= l_max {
                let one = C64::new(1.0, 0.0);
                let mut grown = Array2::zeros((n + 1, new_slab.ncols() + 1));
                grown.slice_mut(s![.., ..new_slab.ncols()]).assign(&new_slab);
                for k in 0..=n {
                    let lam_new = C64::from_polar(1.0, report.new_angles[k]);
                    grown[(k, new_slab.ncols())] =
                        (coeffs.nu - one) / (one - lam_new) / report.h[k].sqrt();
                }
                new_slab = grown;
            }
            Ok(SpectralState::from_parts(
                report.new_angles.clone(),
                Eigvecs::Coords(new_slab),
                state.phase_fixed(),
            ))
        }
        Eigvecs::None => Ok(SpectralState::from_parts(
            report.new_angles.clone(),
            Eigvecs::None,
            state.phase_fixed(),
        )),
    }
}

/// Recovers `(|mu_j|^2, nu)` from two consecutive eigenvalue ladders by solving
/// the linear system `R v = 1` with `R_{kj} = lambda_j/(lambda_j - lambda'_k)`,
/// `R_{k,n+1} = 1/(1 - lambda'_k)`; then `nu = 1 - v_{n+1}` and
/// `|mu_j|^2 = Re(v_j (1 - conj nu))`.
pub fn recover_coeffs_from_angles(
    old_angles: &[f64],
    new_angles: &[f64],
) -> Result<(Vec<f64>, C64)> {
    let n = old_angles.len();
    if !interlaces(old_angles, new_angles) {
        return Err(Error::IllConditioned {
            residual: f64::INFINITY,
            limit: 1e-6,
        });
    }
    let one = C64::new(1.0, 0.0);
    let lambdas: Vec<C64> = old_angles.iter().map(|t| C64::from_polar(1.0, *t)).collect();
    let mut r = Array2::zeros((n + 1, n + 1));
    for k in 0..=n {
        let lam_new = C64::from_polar(1.0, new_angles[k]);
        for j in 0..n {
            r[(k, j)] = lambdas[j] / (lambdas[j] - lam_new);
        }
        r[(k, n)] = one / (one - lam_new);
    }
    let rhs = Array1::from_elem(n + 1, one);
    let v = r.solve(&rhs)?;
    let residual = r
        .dot(&v)
        .iter()
        .zip(rhs.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    if residual > 1e-6 {
        return Err(Error::IllConditioned {
            residual,
            limit: 1e-6,
        });
    }
    let nu = one - v[n];
    let factor = one - nu.conj();
    let mu_sqr = (0..n).map(|j| (v[j] * factor).re).collect();
    Ok((mu_sqr, nu))
}
