//! Per-index trajectories across dimensions.
//!
//! Fix a signed index `k`. As the tower grows, the `k`-th eigenangle drifts
//! down by `theta_k |mu_k|^2` per step and `n theta_k^{(n)} / 2pi` stabilizes.
//! The eigenvector coordinate `<f_k^{(n)}, e_l>` shrinks like `n^{-1/2}`, but
//! renormalized by the running product
//!
//! ```text
//!   D_k^{(n)} = prod_{s=k}^{n-1} h_k^{(s+1)}^{1/2} (lambda_k^{(s)} - lambda_k^{(s+1)}) / mu_k^{(s)}
//! ```
//!
//! the coordinates `g_{k,l}^{(n)} = D_k^{(n)} <f_k^{(n)}, e_l>` form a martingale
//! in `n` (conditionally on all moduli) and stabilize. `|D_k^{(n)}|` grows like
//! `sqrt(n)`, so `|D|` is maintained in log space; its phase is tracked
//! separately and also serves to phase-align the `sqrt(n)`-normalized
//! coordinates `t_{k,l}`.

use serde::{Deserialize, Serialize};

use crate::haar::UpdateCoeffs;
use crate::rng::RngStream;
use crate::secular::{SecularSolveReport, SpectralState};
use crate::{Error, Result, C64, TAU};

/// One recorded point of a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSample {
    pub n: usize,
    /// `n theta_k^{(n)} / 2pi`, signed-index convention.
    pub scaled_angle: f64,
    /// `|D_k^{(n)}|`
    pub abs_d: f64,
    /// `|D_k^{(n)}|^2 / n`, the running estimate of the limit normalizer.
    pub d_limit_estimate: f64,
    /// Phase `Phi_k^{(n)} = D_k^{(n)} / |D_k^{(n)}|`.
    pub phase: C64,
    /// `g_{k,l} = D_k <f_k, e_l>` for tracked coordinates `l = 1..=L`.
    pub g: Vec<C64>,
    /// `theta'_k |mu_k|^2 / (theta_k - theta'_k)` for the step into this sample.
    pub ratio: Option<f64>,
    /// Martingale partial sum `sum_{j<n} (|mu_k^{(j)}|^2 - 1/j)`.
    pub martingale: f64,
}

/// Trajectory of one signed eigenvalue index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenPath {
    pub k: i64,
    /// `ln |D_k^{(n)}|`; log space survives thousands of multiplicative updates.
    log_abs_d: f64,
    phase: C64,
    martingale: f64,
    last_ratio: Option<f64>,
    started: bool,
    pub samples: Vec<PathSample>,
}

impl EigenPath {
    pub fn new(k: i64) -> Self {
        assert!(k != 0 || true, "k = 0 resolves through periodicity");
        Self {
            k,
            log_abs_d: 0.0,
            phase: C64::new(1.0, 0.0),
            martingale: 0.0,
            last_ratio: None,
            started: false,
        samples: Vec::new(),
        }
    }

    /// Dimension at which the index first resolves; `D` starts there at 1.
    pub fn start_dim(&self) -> usize {
        if self.k >= 1 {
            self.k as usize
        } else {
            (1 - self.k) as usize
        }
    }

    pub fn abs_d(&self) -> f64 {
        self.log_abs_d.exp()
    }

    pub fn d(&self) -> C64 {
        self.phase * self.abs_d()
    }

    pub fn phase(&self) -> C64 {
        self.phase
    }

    pub fn martingale(&self) -> f64 {
        self.martingale
    }

    /// Advances the path across one accepted step `before -> after`.
    ///
    /// `D` updates multiplicatively:
    /// `D' = D h_k^{1/2} (lambda_k^{(n)} - lambda_k^{(n+1)}) / mu_k^{(n)}`, with the
    /// empty product `D_k^{(k)} = 1` at the start dimension.
    pub fn advance(
        &mut self,
        before: &SpectralState,
        after: &SpectralState,
        coeffs: &UpdateCoeffs,
        report: &SecularSolveReport,
    ) -> Result<()> {
        let n = before.n();
        debug_assert_eq!(after.n(), n + 1);
        if !self.started {
            if after.n() >= self.start_dim() {
                self.started = true;
            }
            if after.n() == self.start_dim() {
                return Ok(());
            }
            if !self.started {
                return Ok(());
            }
        }
        if n < self.start_dim() {
            return Ok(());
        }

        let lam_old = before.lambda_signed(self.k)?;
        let lam_new = after.lambda_signed(self.k)?;
        let (idx_new, _) = after.resolve_index(self.k)?;
        let mu = coeffs.mu_signed(self.k);
        let h = report.h[idx_new - 1];
        let diff = lam_old - lam_new;

        self.log_abs_d += 0.5 * h.ln() + diff.norm().ln() - mu.norm().ln();
        let mu_phase = mu / mu.norm();
        self.phase *= mu_phase.conj() * (diff / diff.norm());
        self.martingale += mu.norm_sqr() - 1.0 / n as f64;
        self.last_ratio = Some(ratio_diagnostic(before, after, coeffs, self.k)?);
        Ok(())
    }

    /// Snapshot at the current state (after any number of `advance` calls).
    pub fn snapshot(&self, state: &SpectralState, l_track: usize) -> Result<PathSample> {
        let n = state.n();
        let (idx, _) = state.resolve_index(self.k)?;
        let d = self.d();
        let l_avail = match state.eigvecs() {
            crate::secular::Eigvecs::Full(_) => n.min(l_track),
            crate::secular::Eigvecs::Coords(slab) => slab.ncols().min(l_track),
            crate::secular::Eigvecs::None => 0,
        };
        let g = (1..=l_avail)
            .map(|l| state.coord(idx, l).map(|c| d * c))
            .collect::<Result<Vec<_>>>()?;
        Ok(PathSample {
            n,
            scaled_angle: scaled_angle(state, self.k)?,
            abs_d: self.abs_d(),
            d_limit_estimate: (2.0 * self.log_abs_d).exp() / n as f64,
            phase: self.phase,
            g,
            ratio: self.last_ratio,
            martingale: self.martingale,
        })
    }

    pub fn push_sample(&mut self, sample: PathSample) {
        self.samples.push(sample);
    }

    /// Final scaled angle: the artifact's estimate of the limit point `y_k`.
    pub fn y_estimate(&self) -> Option<f64> {
        self.samples.last().map(|s| s.scaled_angle)
    }
}

/// `n theta_k^{(n)} / 2pi` with the periodic signed-index convention
/// (`theta_k = theta_{k+n} - 2pi` for `k <= 0`).
pub fn scaled_angle(state: &SpectralState, k: i64) -> Result<f64> {
    Ok(state.n() as f64 * state.angle_signed(k)? / TAU)
}

/// `theta'_k |mu_k|^2 / (theta_k - theta'_k)`, which tends to 1 as `n` grows.
pub fn ratio_diagnostic(
    before: &SpectralState,
    after: &SpectralState,
    coeffs: &UpdateCoeffs,
    k: i64,
) -> Result<f64> {
    let theta_old = before.angle_signed(k)?;
    let theta_new = after.angle_signed(k)?;
    let mu_sqr = coeffs.mu_signed(k).norm_sqr();
    Ok(theta_new * mu_sqr / (theta_old - theta_new))
}

/// `sqrt(n)` times the phase-aligned coordinates of `f_k^{(n)}`:
/// `t_{k,l}^{(n)} = sqrt(n) Phi_k^{(n)} <f_k^{(n)}, e_l>`, `l = 1..=L`.
pub fn t_coords(path: &EigenPath, state: &SpectralState, l: usize) -> Result<Vec<C64>> {
    let n = state.n();
    let (idx, _) = state.resolve_index(path.k)?;
    let scale = (n as f64).sqrt();
    (1..=l)
        .map(|li| {
            state
                .coord(idx, li)
                .map(|c| path.phase() * c * scale)
        })
        .collect()
}

/// Phase-resampling check of the martingale property.
#[derive(Debug, Clone)]
pub struct PhaseResampleReport {
    /// Sample mean of the recomputed `<g_k^{(n+1)}, e_l>` over redraws.
    pub mean: C64,
    /// Monte-Carlo sigma of the mean (complex scatter / sqrt(trials)).
    pub sigma: f64,
    /// The current value `<g_k^{(n)}, e_l>` the mean must reproduce.
    pub prev: C64,
    /// Empirical variance `E|X - mean|^2` over redraws.
    pub var: f64,
    /// Exact conditional variance from the step data.
    pub exact_var: f64,
    /// Coordinate-free upper bound on the conditional variance.
    pub var_bound: f64,
    /// Recomputation with the originally drawn phases (no redraw).
    pub actual_next: C64,
}

/// Holds all moduli, `nu`, and both eigenvalue ladders fixed; redraws the phases
/// of `mu_1..mu_n` i.i.d. uniform and recomputes `<g_k^{(n+1)}, e_l>` each time.
///
/// The conditional mean must match `<g_k^{(n)}, e_l>`: the increment is a sum of
/// `phi_j / phi_k` terms with zero mean. With `trials = 1` and `redraw = false`
/// the recomputation is exactly the recursion's own output path.
pub fn martingale_phase_test(
    state: &SpectralState,
    coeffs: &UpdateCoeffs,
    report: &SecularSolveReport,
    d_k: C64,
    k: usize,
    l: usize,
    trials: usize,
    rng: &mut RngStream,
    redraw: bool,
) -> Result<PhaseResampleReport> {
    let f = state.full_matrix()?;
    let n = state.n();
    if k < 1 || k > n || l < 1 || l > n {
        return Err(Error::IndexUnresolvable {
            k: k as i64,
            n,
        });
    }
    let lam_old = C64::from_polar(1.0, state.angles()[k - 1]);
    let lam_new = C64::from_polar(1.0, report.new_angles[k - 1]);
    let h = report.h[k - 1];
    let prev = d_k * f[(l - 1, k - 1)];
    // D_k^{(n+1)} = d_k h^{1/2} (lam_old - lam_new)/mu_k, and
    // <g^{(n+1)}, e_l> = D^{(n+1)} h^{-1/2} sum_j mu_j/(lam_j - lam_new) <f_j, e_l>
    //                  = prev + d_k (lam_old - lam_new)/mu_k sum_{j != k} ...
    let factor = d_k * (lam_old - lam_new);
    let moduli: Vec<f64> = coeffs.mu.iter().map(|m| m.norm()).collect();
    let orig_phases: Vec<C64> = coeffs
        .mu
        .iter()
        .zip(&moduli)
        .map(|(m, r)| m / r)
        .collect();
    let c: Vec<C64> = (0..n)
        .map(|j| {
            if j == k - 1 {
                C64::new(0.0, 0.0)
            } else {
                let lam_j = C64::from_polar(1.0, state.angles()[j]);
                moduli[j] / (lam_j - lam_new) * f[(l - 1, j)]
            }
        })
        .collect();
    let _ = h;

    let recompute = |phases: &[C64]| -> C64 {
        let mut sum = C64::new(0.0, 0.0);
        for j in 0..n {
            if j != k - 1 {
                sum += phases[j] * c[j];
            }
        }
        prev + factor / (phases[k - 1] * moduli[k - 1]) * sum
    };

    let actual_next = recompute(&orig_phases);

    let mut draws: Vec<C64> = Vec::with_capacity(trials);
    let mut phases = orig_phases.clone();
    for _ in 0..trials {
        if redraw {
            for p in phases.iter_mut() {
                *p = rng.unit_phase();
            }
        }
        draws.push(recompute(&phases));
    }
    let mean = draws.iter().sum::<C64>() / trials as f64;
    let var = draws.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / trials as f64;
    let sigma = (var / trials as f64).sqrt();

    let scale = factor.norm_sqr() / moduli[k - 1].powi(2);
    let exact_var: f64 = scale * c.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let var_bound: f64 = scale
        * (0..n)
            .filter(|&j| j != k - 1)
            .map(|j| {
                let lam_j = C64::from_polar(1.0, state.angles()[j]);
                moduli[j].powi(2) / (lam_j - lam_new).norm_sqr()
            })
            .sum::<f64>();

    Ok(PhaseResampleReport {
        mean,
        sigma,
        prev,
        var,
        exact_var,
        var_bound,
        actual_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::sample_update_coeffs;
    use crate::rng::Purpose;
    use crate::secular::{
        advance_state, solve_secular, SpectralState, StateMode, DEFAULT_SECULAR_TOL,
    };

    const SQRT2: f64 = std::f64::consts::SQRT_2;
    const PI: f64 = std::f64::consts::PI;

    fn worked_step() -> (SpectralState, SpectralState, UpdateCoeffs, crate::secular::SecularSolveReport) {
        let state = SpectralState::initial(C64::new(-1.0, 0.0), StateMode::Full, 4).unwrap();
        let coeffs = UpdateCoeffs::new(
            vec![C64::new(1.0 / SQRT2, 0.0)],
            C64::new(1.0 / SQRT2, 0.0),
        );
        let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
        let after = advance_state(&state, &coeffs, &report, 4).unwrap();
        (state, after, coeffs, report)
    }

    #[test]
    fn d_starts_at_one_and_matches_closed_form() {
        let (before, after, coeffs, report) = worked_step();
        let mut path = EigenPath::new(1);
        assert_eq!(path.abs_d(), 1.0); // empty product at n = k
        path.advance(&before, &after, &coeffs, &report).unwrap();
        // |D_1^{(2)}|^2 = 2 (1 - 1/sqrt2)(2 + sqrt2) = 2
        let want = 2.0 * (1.0 - 1.0 / SQRT2) * (2.0 + SQRT2);
        assert!((want - 2.0).abs() < 1e-12);
        assert!((path.abs_d().powi(2) - want).abs() < 1e-11);
    }

    #[test]
    fn ratio_closed_form() {
        let (before, after, coeffs, _) = worked_step();
        let r = ratio_diagnostic(&before, &after, &coeffs, 1).unwrap();
        // (pi/4)(1/2)/(pi - pi/4) = 1/6
        assert!((r - 1.0 / 6.0).abs() < 1e-12);
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn scaled_angle_conventions() {
        let state = SpectralState::from_parts(
            vec![PI],
            crate::secular::Eigvecs::None,
            true,
        );
        assert!((scaled_angle(&state, 1).unwrap() - 0.5).abs() < 1e-15);

        let state3 = SpectralState::from_parts(
            vec![1.0, 2.5, 5.0],
            crate::secular::Eigvecs::None,
            true,
        );
        let s0 = scaled_angle(&state3, 0).unwrap();
        let s3 = scaled_angle(&state3, 3).unwrap();
        assert!((s0 - (s3 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn martingale_mean_and_variance() {
        // build a FULL state at n = 16 in coefficient mode
        let seed = 420;
        let mut rng0 = RngStream::for_step(seed, 1, Purpose::Sphere);
        let x1 = crate::haar::sample_sphere(1, &mut rng0);
        let mut state = SpectralState::initial(x1.entries()[0], StateMode::Full, 16).unwrap();
        let mut path = EigenPath::new(1);
        let mut final_step = None;
        for step in 1..16 {
            let mut rng = RngStream::for_step(seed, step as u64 + 1, Purpose::Coeffs);
            let coeffs = sample_update_coeffs(state.n(), &mut rng).unwrap();
            let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
            let after = advance_state(&state, &coeffs, &report, 16).unwrap();
            if step < 15 {
                path.advance(&state, &after, &coeffs, &report).unwrap();
                state = after;
            } else {
                final_step = Some((state.clone(), coeffs, report, after));
            }
        }
        let (before, coeffs, report, after) = final_step.unwrap();

        for (k, l) in [(1usize, 1usize), (1, 2), (2, 1), (2, 2)] {
            let d_k = if k == 1 {
                path.d()
            } else {
                // build the k = 2 path the same way
                C64::new(1.0, 0.0) * rebuilt_d(seed, k as i64)
            };
            let mut rng = RngStream::for_step(seed, 99, Purpose::PhaseResample);
            let rep = martingale_phase_test(
                &before, &coeffs, &report, d_k, k, l, 10_000, &mut rng, true,
            )
            .unwrap();
            let dev = (rep.mean - rep.prev).norm();
            assert!(
                dev <= 3.0 * rep.sigma,
                "phase-resampled mean off by {dev} vs 3 sigma {}",
                3.0 * rep.sigma
            );
            // empirical variance below the coordinate-free bound (3-sigma slack)
            let var_sigma = rep.var * (2.0 / 10_000.0f64).sqrt();
            assert!(rep.var <= rep.var_bound + 3.0 * var_sigma);
            assert!((rep.var - rep.exact_var).abs() <= 5.0 * var_sigma + 1e-12);

            // frozen phases reproduce the actual recursion output
            let mut rng1 = RngStream::for_step(seed, 100, Purpose::PhaseResample);
            let rep_frozen = martingale_phase_test(
                &before, &coeffs, &report, d_k, k, l, 1, &mut rng1, false,
            )
            .unwrap();
            let mut check_path = EigenPath::new(k as i64);
            check_path.log_abs_d = d_k.norm().ln();
            check_path.phase = d_k / d_k.norm();
            check_path.advance(&before, &after, &coeffs, &report).unwrap();
            let g_next = check_path.d() * after.coord(k, l).unwrap();
            assert!(
                (rep_frozen.actual_next - g_next).norm() <= 1e-10 * (1.0 + g_next.norm()),
                "frozen recomputation {} vs recursion {}",
                rep_frozen.actual_next,
                g_next
            );
        }
    }

    fn rebuilt_d(seed: u64, k: i64) -> C64 {
        let mut rng0 = RngStream::for_step(seed, 1, Purpose::Sphere);
        let x1 = crate::haar::sample_sphere(1, &mut rng0);
        let mut state = SpectralState::initial(x1.entries()[0], StateMode::Full, 16).unwrap();
        let mut path = EigenPath::new(k);
        for step in 1..15 {
            let mut rng = RngStream::for_step(seed, step as u64 + 1, Purpose::Coeffs);
            let coeffs = sample_update_coeffs(state.n(), &mut rng).unwrap();
            let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
            let after = advance_state(&state, &coeffs, &report, 16).unwrap();
            path.advance(&state, &after, &coeffs, &report).unwrap();
            state = after;
        }
        path.d()
    }

    #[test]
    fn t_coords_norm_bound() {
        let (_, after, _, _) = worked_step();
        let mut path = EigenPath::new(1);
        path.started = true;
        let t = t_coords(&path, &after, 2).unwrap();
        let norm_sqr: f64 = t.iter().map(|z| z.norm_sqr()).sum();
        assert!(norm_sqr <= after.n() as f64 + 1e-12);
    }
}
