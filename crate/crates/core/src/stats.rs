//! Kernels, correlation determinants, gap probabilities, and Monte-Carlo
//! distributional tests.
//!
//! The scaled eigenangles `n theta / 2pi` of a Haar unitary form a determinantal
//! process whose bulk limit has the sine kernel `sin(pi y)/(pi y)`; at finite `n`
//! the kernel is `sin(n t/2)/(2 pi sin(t/2))` in angle units. Avoidance
//! probabilities are Toeplitz determinants of Fourier coefficients, and squared
//! eigenvector coordinates follow `Beta(1, n-1)`. Everything here either
//! evaluates those closed forms or tests simulation output against them.

use ndarray::Array2;
use ndarray_linalg::Determinant;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64, TAU};

/// Finite-n kernel `sin(n t / 2) / (2 pi sin(t / 2))`, continuously extended
/// (value `n / 2pi` at `t = 0` and at the other zeros of the denominator).
pub fn kernel_finite(t: f64, n: usize) -> f64 {
    let half = 0.5 * t;
    let denom = half.sin();
    if denom.abs() < 1e-9 {
        // l'Hopital at the shared zeros of numerator and denominator
        return n as f64 * (n as f64 * half).cos() / (TAU * half.cos());
    }
    (n as f64 * half).sin() / (TAU * denom)
}

/// Sine kernel `sin(pi y) / (pi y)`, 1 at `y = 0`.
pub fn kernel_sine(y: f64) -> f64 {
    let x = std::f64::consts::PI * y;
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Which kernel drives a correlation determinant.
#[derive(Debug, Clone, Copy)]
pub enum KernelKind {
    Sine,
    Finite(usize),
}

impl KernelKind {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelKind::Sine => kernel_sine(y - x),
            KernelKind::Finite(n) => kernel_finite(y - x, *n),
        }
    }
}

/// Plain LU determinant with partial pivoting for the small real kernel matrices.
fn det_lu(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let (pivot, _) = m
            .iter()
            .enumerate()
            .skip(col)
            .map(|(i, row)| (i, row[col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            for j in col..n {
                m[i][j] -= f * m[col][j];
            }
        }
    }
    det
}

/// `r`-point correlation `det(K(y_p, y_q))_{p,q}`.
pub fn rho_r(points: &[f64], kernel: KernelKind) -> f64 {
    let r = points.len();
    assert!(r >= 1);
    let m: Vec<Vec<f64>> = points
        .iter()
        .map(|&x| points.iter().map(|&y| kernel.eval(x, y)).collect())
        .collect();
    det_lu(m)
}

/// Probability that no eigenvalue of a Haar `U(n)` matrix lies in `[a, b]`,
/// plus the exponential avoidance bound it must respect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapProbability {
    pub probability: f64,
    /// `exp(-(b-a) n / 2pi)`: avoiding `[a,b]` means all eigenvalues land in the
    /// complement, and that probability is at most this.
    pub avoidance_bound: f64,
}

/// Toeplitz-determinant gap probability: `det M^{I^c}` with
/// `M^J_{jk} = int_J e^{i(j-k)t} dt/2pi`, where `I = [a,b]`. The complement
/// matrix is assembled in closed form as `I - M^{[a,b]}`.
pub fn gap_probability(n: usize, a: f64, b: f64) -> Result<GapProbability> {
    if !(0.0..=TAU).contains(&a) || !(0.0..=TAU).contains(&b) || b < a {
        return Err(Error::DegenerateInterval { a, b });
    }
    let len = b - a;
    let mut m = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            if j == k {
                m[(j, k)] = C64::new(1.0 - len / TAU, 0.0);
            } else {
                let d = (j as f64) - (k as f64);
                // integral over [a,b] of e^{i d t} dt / 2pi, subtracted from 0
                let upper = C64::from_polar(1.0, d * b);
                let lower = C64::from_polar(1.0, d * a);
                m[(j, k)] = -(upper - lower) / (C64::new(0.0, TAU * d));
            }
        }
    }
    let det = m.det()?;
    let probability = det.re.clamp(0.0, 1.0);
    let avoidance_bound = (-len * n as f64 / TAU).exp();
    debug_assert!(det.im.abs() < 1e-9);
    Ok(GapProbability {
        probability,
        avoidance_bound,
    })
}

/// Eigenangles of one matrix scaled by `n/2pi` and mapped to `(-n/2, n/2]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSample {
    pub points: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl PointSample {
    pub fn from_angles(angles: &[f64], seed: u64) -> Self {
        let n = angles.len();
        let mut points: Vec<f64> = angles
            .iter()
            .map(|&t| {
                let s = n as f64 * t / TAU;
                if s > n as f64 / 2.0 {
                    s - n as f64
                } else {
                    s
                }
            })
            .collect();
        points.sort_by(f64::total_cmp);
        Self { points, n, seed }
    }
}

/// Histogram of scaled pairwise distances with per-bin Monte-Carlo errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    /// Bin edges, `len = bins + 1`.
    pub edges: Vec<f64>,
    /// Estimated pair density per bin (unit-density normalization).
    pub density: Vec<f64>,
    /// Standard error of each density estimate, from the across-sample scatter.
    pub sigma: Vec<f64>,
    pub counts: Vec<u64>,
}

impl CorrelationHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Pair-correlation estimate from scaled samples: circular pairwise distances
/// within `(w_lo, w_hi]`, binned at width `h`, normalized so the sine-kernel
/// prediction is `1 - sinc^2(pi d)`.
pub fn empirical_pair_correlation(
    samples: &[PointSample],
    w_lo: f64,
    w_hi: f64,
    h: f64,
) -> Result<CorrelationHistogram> {
    if samples.len() < 1000 {
        return Err(Error::InsufficientSamples {
            got: samples.len(),
            need: 1000,
        });
    }
    let bins = ((w_hi - w_lo) / h).round() as usize;
    let edges: Vec<f64> = (0..=bins).map(|i| w_lo + h * i as f64).collect();
    let mut counts = vec![0u64; bins];
    let mut per_sample_sum = vec![0.0f64; bins];
    let mut per_sample_sq = vec![0.0f64; bins];
    for sample in samples {
        let n = sample.n as f64;
        let mut local = vec![0u32; bins];
        let pts = &sample.points;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let mut d = (pts[j] - pts[i]).abs();
                if d > n / 2.0 {
                    d = n - d;
                }
                if d > w_lo && d <= w_hi {
                    let bin = ((d - w_lo) / h).floor() as usize;
                    let bin = bin.min(bins - 1);
                    local[bin] += 1;
                }
            }
        }
        for (b, &c) in local.iter().enumerate() {
            let dens = c as f64 / (n * h);
            counts[b] += c as u64;
            per_sample_sum[b] += dens;
            per_sample_sq[b] += dens * dens;
        }
    }
    let s = samples.len() as f64;
    let density: Vec<f64> = per_sample_sum.iter().map(|v| v / s).collect();
    let sigma: Vec<f64> = per_sample_sq
        .iter()
        .zip(&density)
        .map(|(sq, mean)| ((sq / s - mean * mean).max(0.0) / s).sqrt())
        .collect();
    Ok(CorrelationHistogram {
        edges,
        density,
        sigma,
        counts,
    })
}

/// One row of the trace-moment table `E |tr u^j|^2 = j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMomentRow {
    pub j: usize,
    pub mean: f64,
    pub sigma: f64,
    pub target: f64,
}

/// Squared trace moments from eigenangle samples: `tr u^j = sum_k e^{i j theta_k}`.
/// Valid for `2 j <= n` (the moment identity's window).
pub fn trace_moments(angle_samples: &[Vec<f64>], j_max: usize) -> Result<Vec<TraceMomentRow>> {
    let n = angle_samples
        .first()
        .ok_or(Error::InsufficientSamples { got: 0, need: 1 })?
        .len();
    if 2 * j_max > n {
        return Err(Error::WindowViolation {
            two_j: 2 * j_max,
            n,
        });
    }
    let s = angle_samples.len() as f64;
    let mut rows = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for angles in angle_samples {
            let tr: C64 = angles
                .iter()
                .map(|&t| C64::from_polar(1.0, j as f64 * t))
                .sum();
            let m = tr.norm_sqr();
            sum += m;
            sum_sq += m * m;
        }
        let mean = sum / s;
        let var = (sum_sq / s - mean * mean).max(0.0);
        rows.push(TraceMomentRow {
            j,
            mean,
            sigma: (var / s).sqrt(),
            target: j as f64,
        });
    }
    Ok(rows)
}

/// Kolmogorov-Smirnov test report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS statistic against a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}

/// Asymptotic Kolmogorov distribution with the standard finite-sample
/// correction `lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) D`.
pub fn ks_p_value(statistic: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    let mut p = 0.0;
    for k in 1..=100 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// One-sample KS test with p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsReport {
    let statistic = ks_statistic(samples, cdf);
    KsReport {
        statistic,
        p_value: ks_p_value(statistic, samples.len()),
    }
}

/// Two-sample KS statistic.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// KS test of squared-coordinate samples against `Beta(1, n-1)`, whose CDF is
/// the closed form `1 - (1-x)^{n-1}`.
pub fn beta_delocalization_test(samples: &[f64], n: usize) -> Result<KsReport> {
    if samples.len() < 1000 {
        return Err(Error::InsufficientSamples {
            got: samples.len(),
            need: 1000,
        });
    }
    let shape = (n - 1) as f64;
    Ok(ks_test(samples, |x| {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            1.0 - (1.0 - x).powf(shape)
        }
    }))
}

/// KS test against the standard exponential (the `n -> inf` limit of
/// `n Beta(1, n-1)`).
pub fn exp1_test(samples: &[f64]) -> Result<KsReport> {
    if samples.len() < 1000 {
        return Err(Error::InsufficientSamples {
            got: samples.len(),
            need: 1000,
        });
    }
    Ok(ks_test(samples, |x| {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (-x).exp()
        }
    }))
}

/// Per-step event flags with thresholds from the a-priori estimates:
/// `|nu| <= n^{-1/2+eps}`, `max_k |mu_k| <= n^{-1/2+eps}`, and all angle gaps in
/// `[n^{-5/3-eps}, n^{-1+eps}]` (the wrap-around gap included).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventFlags {
    pub n: usize,
    /// E0: all mu nonzero and nu nonzero.
    pub e0_ok: bool,
    /// E1: `|nu| <= n^{-1/2+eps}`.
    pub e1_ok: bool,
    /// E2: `max_k |mu_k| <= n^{-1/2+eps}`.
    pub e2_ok: bool,
    /// E3 lower: min gap `>= n^{-5/3-eps}`.
    pub e3_min_ok: bool,
    /// E3 upper: max gap `<= n^{-1+eps}`.
    pub e3_max_ok: bool,
    pub max_mu: f64,
    pub nu_abs: f64,
    pub min_gap: f64,
    pub max_gap: f64,
}

/// Evaluates the event flags for one step's data. `angles` are the `n` ordered
/// eigenangles, `max_mu`/`nu_abs` the step's coefficient moduli.
pub fn event_flags(angles: &[f64], max_mu: f64, nu_abs: f64, eps: f64) -> EventFlags {
    let n = angles.len();
    let nf = n as f64;
    let mut min_gap = f64::INFINITY;
    let mut max_gap: f64 = 0.0;
    for w in angles.windows(2) {
        let g = w[1] - w[0];
        min_gap = min_gap.min(g);
        max_gap = max_gap.max(g);
    }
    if n >= 1 {
        let wrap = angles[0] + TAU - angles[n - 1];
        min_gap = min_gap.min(wrap);
        max_gap = max_gap.max(wrap);
    }
    let coeff_threshold = nf.powf(-0.5 + eps);
    EventFlags {
        n,
        e0_ok: max_mu > 0.0 && nu_abs > 0.0,
        e1_ok: nu_abs <= coeff_threshold,
        e2_ok: max_mu <= coeff_threshold,
        e3_min_ok: min_gap >= nf.powf(-5.0 / 3.0 - eps),
        e3_max_ok: max_gap <= nf.powf(-1.0 + eps),
        max_mu,
        nu_abs,
        min_gap,
        max_gap,
    }
}

/// Aggregate over a trajectory's flags: violation counts and the first
/// violating dimension per event.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventSummary {
    pub e1_violations: usize,
    pub e2_violations: usize,
    pub e3_min_violations: usize,
    pub e3_max_violations: usize,
    pub first_violation: Option<usize>,
}

pub fn event_diagnostics(flags: &[EventFlags]) -> EventSummary {
    let mut summary = EventSummary::default();
    for f in flags {
        let mut bad = false;
        if !f.e1_ok {
            summary.e1_violations += 1;
            bad = true;
        }
        if !f.e2_ok {
            summary.e2_violations += 1;
            bad = true;
        }
        if !f.e3_min_ok {
            summary.e3_min_violations += 1;
            bad = true;
        }
        if !f.e3_max_ok {
            summary.e3_max_violations += 1;
            bad = true;
        }
        if bad && summary.first_violation.is_none() {
            summary.first_violation = Some(f.n);
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn kernel_values() {
        let n = 12;
        assert!((kernel_finite(0.0, n) - n as f64 / TAU).abs() < 1e-12);
        // zero of the numerator away from the denominator's zeros
        assert!(kernel_finite(TAU / n as f64, n).abs() < 1e-12);
        assert!(kernel_finite(std::f64::consts::PI, 2).abs() < 1e-12);

        assert_eq!(kernel_sine(0.0), 1.0);
        assert!(kernel_sine(1.0).abs() < 1e-15);
        assert!((kernel_sine(0.5) - 2.0 / std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn finite_kernel_density_integrates_to_n() {
        // rho_1 = K(0) is constant; trapezoid over [0, 2pi) must give n
        let n = 16;
        let m = 1 << 12;
        let f = kernel_finite(0.0, n);
        let integral: f64 = (0..m).map(|_| f * TAU / m as f64).sum();
        assert!((integral - n as f64).abs() < 1e-8);

        // reproducing property: int K(t)^2 dt over the circle equals K(0)
        let quad: f64 = (0..m)
            .map(|i| {
                let t = TAU * i as f64 / m as f64;
                kernel_finite(t, n).powi(2) * TAU / m as f64
            })
            .sum();
        assert!((quad - kernel_finite(0.0, n)).abs() < 1e-8);
    }

    #[test]
    fn correlation_determinants() {
        assert!((rho_r(&[0.3], KernelKind::Sine) - 1.0).abs() < 1e-15);
        assert!(rho_r(&[0.4, 0.4], KernelKind::Sine).abs() < 1e-12);
        let s = 0.5;
        let want = 1.0 - kernel_sine(s).powi(2);
        assert!((rho_r(&[0.0, s], KernelKind::Sine) - want).abs() < 1e-12);
        assert!((want - (1.0 - 4.0 / std::f64::consts::PI.powi(2))).abs() < 1e-12);

        // permutation symmetry on random triples
        let mut rng = RngStream::new(5, 5);
        for _ in 0..50 {
            let pts = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let a = rho_r(&pts, KernelKind::Sine);
            let b = rho_r(&[pts[2], pts[0], pts[1]], KernelKind::Sine);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_probability_boundaries_and_monotonicity() {
        let n = 8;
        let full = gap_probability(n, 0.0, TAU).unwrap();
        assert!(full.probability.abs() < 1e-10, "some eigenvalue always exists");
        let empty = gap_probability(n, 1.0, 1.0).unwrap();
        assert!((empty.probability - 1.0).abs() < 1e-12);
        assert!(gap_probability(n, 2.0, 1.0).is_err());

        // nonincreasing in interval length, and below the avoidance bound
        let mut last = 1.0;
        for i in 1..=8 {
            let len = i as f64 * 0.4;
            let g = gap_probability(n, 1.0, 1.0 + len).unwrap();
            assert!(g.probability <= last + 1e-12);
            assert!(g.probability <= g.avoidance_bound + 1e-9);
            last = g.probability;
        }
    }

    #[test]
    fn trace_moment_window() {
        assert!(matches!(
            trace_moments(&[vec![0.5; 8]], 5),
            Err(Error::WindowViolation { .. })
        ));
    }

    #[test]
    fn ks_self_test_on_beta_draws() {
        // sampling from the exact Beta(1, n-1) law must pass its own KS test
        // (inverse CDF: x = 1 - (1-u)^{1/(n-1)})
        let n = 64;
        let mut rng = RngStream::new(31, 9);
        let mut p_values = Vec::new();
        for _ in 0..100 {
            let samples: Vec<f64> = (0..2000)
                .map(|_| 1.0 - (1.0 - rng.gen_range(0.0..1.0)).powf(1.0 / (n as f64 - 1.0)))
                .collect();
            p_values.push(beta_delocalization_test(&samples, n).unwrap().p_value);
        }
        let below = p_values.iter().filter(|&&p| p < 0.01).count();
        assert!(below <= 6, "self-test rejected {below}/100 at level 0.01");
        // p-values roughly spread out, not clumped at one end
        let mean: f64 = p_values.iter().sum::<f64>() / p_values.len() as f64;
        assert!((mean - 0.5).abs() < 0.2, "p-value mean {mean}");
    }

    #[test]
    fn ks_two_sample_identical_distributions() {
        let mut rng = RngStream::new(37, 2);
        let xs: Vec<f64> = (0..5000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..5000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let d = ks_two_sample(&xs, &ys);
        assert!(d < ks_two_sample_critical(0.01, xs.len(), ys.len()));
    }

    #[test]
    fn insufficient_samples_rejected() {
        assert!(matches!(
            beta_delocalization_test(&[0.5; 10], 8),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(
            empirical_pair_correlation(&[], 0.25, 4.0, 0.25),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn event_flags_mechanics() {
        // duplicate angle: zero gap flagged against the lower bound
        let flags = event_flags(&[1.0, 1.0, 2.0], 0.1, 0.1, 0.1);
        assert!(!flags.e3_min_ok);
        assert_eq!(flags.min_gap, 0.0);

        // wrap-around gap is included
        let flags = event_flags(&[0.1, 0.2, 0.3], 0.01, 0.01, 0.1);
        assert!((flags.max_gap - (0.1 + TAU - 0.3)).abs() < 1e-12);

        // small n: violations expected and merely logged
        let summary = event_diagnostics(&[flags.clone()]);
        assert!(summary.e3_max_violations > 0);
        assert_eq!(summary.first_violation, Some(3));
    }

    #[test]
    fn pair_correlation_of_poisson_points_is_flat() {
        // independent uniform scaled points have pair density 1 across all bins
        let mut rng = RngStream::new(41, 3);
        let n = 64;
        let samples: Vec<PointSample> = (0..2000)
            .map(|s| {
                let mut angles: Vec<f64> =
                    (0..n).map(|_| rng.gen_range(1e-9..TAU)).collect();
                angles.sort_by(f64::total_cmp);
                PointSample::from_angles(&angles, s)
            })
            .collect();
        let hist = empirical_pair_correlation(&samples, 0.25, 4.0, 0.25).unwrap();
        for (b, center) in hist.centers().iter().enumerate() {
            let tol = (4.0 * hist.sigma[b]).max(0.05);
            assert!(
                (hist.density[b] - 1.0).abs() <= tol,
                "bin {center}: density {} sigma {}",
                hist.density[b],
                hist.sigma[b]
            );
        }
    }
}
