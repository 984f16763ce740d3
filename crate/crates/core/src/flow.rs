//! The limiting flow and its finite-n residuals.
//!
//! On finite linear combinations of eigenpaths the flow acts diagonally:
//! `U^alpha` multiplies the coefficient of path `k` by `exp(2 pi i alpha y_k)`.
//! At finite `n` the same action is approximated by matrix powers
//! `u_n^{floor(alpha n)}`, and the residuals of that approximation, expanded in
//! the eigenbasis, are the quantitative content of the construction. The
//! averaged inner products (Cesaro, Abel, holomorphic-embedding) recover the
//! coefficient-space inner product from raw coordinate sequences.

use std::collections::BTreeMap;

use crate::secular::SpectralState;
use crate::{Error, Result, C64, TAU};

/// Finite coefficient combination over tracked eigenpaths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowElement {
    pub coeffs: BTreeMap<i64, C64>,
}

impl FlowElement {
    pub fn single(k: i64) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(k, C64::new(1.0, 0.0));
        Self { coeffs }
    }

    pub fn from_coeffs(coeffs: BTreeMap<i64, C64>) -> Self {
        Self { coeffs }
    }

    /// `sum_k (1 + |k|^{1+delta}) |lambda_k|^2`, the weighted profile deciding
    /// membership in the delta-restricted completion.
    pub fn weight_profile(&self, delta: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, c)| (1.0 + (k.abs() as f64).powf(1.0 + delta)) * c.norm_sqr())
            .sum()
    }

    /// Materialized prefix `w_l = sum_k lambda_k g_{k,l}` from per-path
    /// coordinate rows.
    pub fn materialize(&self, g_rows: &BTreeMap<i64, Vec<C64>>, len: usize) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); len];
        for (k, c) in &self.coeffs {
            let row = g_rows.get(k).ok_or(Error::IndexUnresolvable {
                k: *k,
                n: g_rows.len(),
            })?;
            if row.len() < len {
                return Err(Error::DimMismatch {
                    expected: len,
                    got: row.len(),
                });
            }
            for (o, v) in out.iter_mut().zip(row) {
                *o += *c * v;
            }
        }
        Ok(out)
    }
}

/// Diagonal flow action: coefficient `k` picks up `exp(2 pi i alpha y_k)`.
/// Moduli are untouched, so the semigroup law holds exactly in the phases.
pub fn apply_u(alpha: f64, elem: &FlowElement, y: &BTreeMap<i64, f64>) -> Result<FlowElement> {
    let mut out = BTreeMap::new();
    for (k, c) in &elem.coeffs {
        let y_k = y.get(k).ok_or(Error::IndexUnresolvable {
            k: *k,
            n: y.len(),
        })?;
        out.insert(*k, c * C64::from_polar(1.0, TAU * alpha * y_k));
    }
    Ok(FlowElement::from_coeffs(out))
}

/// Eigenbasis expansion coefficients `eta_j = <v, f_j>` of a fixed vector.
fn eigenbasis_coeffs(state: &SpectralState, v: &[C64]) -> Result<Vec<C64>> {
    let f = state.full_matrix()?;
    let n = state.n();
    if v.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: v.len(),
        });
    }
    Ok((0..n)
        .map(|j| (0..n).map(|l| v[l] * f[(l, j)].conj()).sum())
        .collect())
}

/// Whether `flow_residual` divides by the vector norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowVariant {
    Normalized,
    Absolute,
}

/// `|| u_n^{floor(alpha n)} g - e^{2 pi i alpha y_hat} g ||` for a fixed vector
/// `g` of length `n`, computed diagonally in the eigenbasis; `y_hat` is the
/// scaled angle of index `k` at this `n`.
pub fn flow_residual(
    state: &SpectralState,
    g: &[C64],
    k: i64,
    alpha: f64,
    variant: FlowVariant,
) -> Result<f64> {
    let n = state.n();
    let y_hat = crate::eigenpath::scaled_angle(state, k)?;
    let eta = eigenbasis_coeffs(state, g)?;
    let power = (alpha * n as f64).floor();
    let target = C64::from_polar(1.0, TAU * alpha * y_hat);
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, e) in eta.iter().enumerate() {
        let rot = C64::from_polar(1.0, power * state.angles()[j]);
        num += e.norm_sqr() * (rot - target).norm_sqr();
        den += e.norm_sqr();
    }
    let abs = num.sqrt();
    Ok(match variant {
        FlowVariant::Absolute => abs,
        FlowVariant::Normalized => abs / den.sqrt(),
    })
}

/// `|<u_n^{floor(alpha n)} g - e^{2 pi i alpha y_hat} g, u_n^{floor(gamma n)} e_l>|`,
/// evaluated diagonally. Bounded by the absolute flow residual (Cauchy-Schwarz
/// against a unit vector), which is asserted on every evaluation.
pub fn component_residual(
    state: &SpectralState,
    g: &[C64],
    k: i64,
    alpha: f64,
    gamma: f64,
    l: usize,
) -> Result<f64> {
    let f = state.full_matrix()?;
    let n = state.n();
    let y_hat = crate::eigenpath::scaled_angle(state, k)?;
    let eta = eigenbasis_coeffs(state, g)?;
    let a_pow = (alpha * n as f64).floor();
    let g_pow = (gamma * n as f64).floor();
    let target = C64::from_polar(1.0, TAU * alpha * y_hat);
    let mut sum = C64::new(0.0, 0.0);
    for (j, e) in eta.iter().enumerate() {
        let th = state.angles()[j];
        let rot = C64::from_polar(1.0, a_pow * th);
        let back = C64::from_polar(1.0, -g_pow * th);
        sum += e * (rot - target) * back * f[(l - 1, j)];
    }
    let value = sum.norm();
    debug_assert!(
        value <= flow_residual(state, g, k, alpha, FlowVariant::Absolute)? + 1e-9,
        "component residual exceeds Cauchy-Schwarz bound"
    );
    Ok(value)
}

/// How an inner-product estimate was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerMethod {
    Cesaro { n: usize },
    Abel { s: f64, truncation: usize },
    Holo { s: f64, nodes: usize, truncation: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductEstimate {
    pub value: C64,
    pub method: InnerMethod,
}

/// Cesaro mean `(1/n) sum_{l<=n} w_l conj(w'_l)`.
pub fn cesaro_inner(w: &[C64], w2: &[C64]) -> Result<InnerProductEstimate> {
    if w.len() != w2.len() {
        return Err(Error::DimMismatch {
            expected: w.len(),
            got: w2.len(),
        });
    }
    let n = w.len();
    let value = w.iter().zip(w2).map(|(a, b)| a * b.conj()).sum::<C64>() / n as f64;
    Ok(InnerProductEstimate {
        value,
        method: InnerMethod::Cesaro { n },
    })
}

/// Abel mean `(1-s) sum_{l>=1} s^{l-1} w_l conj(w'_l)`, truncated at `trunc`.
///
/// The truncation must satisfy `(1-s) s^trunc max|w_l w'_l| < 1e-12`.
pub fn abel_inner(w: &[C64], w2: &[C64], s: f64, trunc: usize) -> Result<InnerProductEstimate> {
    assert!(s > 0.0 && s < 1.0, "Abel parameter must be in (0,1)");
    let trunc = trunc.min(w.len()).min(w2.len());
    let max_prod = w
        .iter()
        .zip(w2)
        .take(trunc)
        .map(|(a, b)| a.norm() * b.norm())
        .fold(0.0f64, f64::max);
    let tail_bound = (1.0 - s) * s.powi(trunc as i32) * max_prod.max(1.0);
    if tail_bound >= 1e-12 {
        return Err(Error::TruncationTooCoarse { bound: tail_bound });
    }
    let mut value = C64::new(0.0, 0.0);
    let mut weight = 1.0;
    for (a, b) in w.iter().zip(w2).take(trunc) {
        value += weight * a * b.conj();
        weight *= s;
    }
    value *= 1.0 - s;
    Ok(InnerProductEstimate {
        value,
        method: InnerMethod::Abel {
            s,
            truncation: trunc,
        },
    })
}

/// Truncated power series `F(w)(z) = sum_{l=1}^{N} w_l z^{l-1}`.
fn power_series(w: &[C64], z: C64, trunc: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &c in w.iter().take(trunc).rev() {
        acc = acc * z + c;
    }
    acc
}

/// Holomorphic-embedding form: `2 (1-s) (1/M) sum_m F(w)(s e^{i th_m}) conj(F(w')(s e^{i th_m}))`
/// on the uniform grid. The trapezoid rule is exact for trigonometric
/// polynomials of the truncation degree once `M > 2N`.
pub fn holo_inner(
    w: &[C64],
    w2: &[C64],
    s: f64,
    nodes: usize,
    trunc: usize,
) -> Result<InnerProductEstimate> {
    assert!(s > 0.0 && s < 1.0);
    let trunc = trunc.min(w.len()).min(w2.len());
    if nodes <= 2 * trunc {
        return Err(Error::QuadratureTooCoarse {
            nodes,
            degree: trunc,
        });
    }
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..nodes {
        let z = C64::from_polar(s, TAU * m as f64 / nodes as f64);
        acc += power_series(w, z, trunc) * power_series(w2, z, trunc).conj();
    }
    let value = 2.0 * (1.0 - s) / nodes as f64 * acc;
    Ok(InnerProductEstimate {
        value,
        method: InnerMethod::Holo {
            s,
            nodes,
            truncation: trunc,
        },
    })
}

/// The same quantity as [`holo_inner`] summed directly:
/// `2 (1-s) sum_l s^{2(l-1)} w_l conj(w'_l)` (the Fubini rearrangement).
pub fn holo_series(w: &[C64], w2: &[C64], s: f64, trunc: usize) -> C64 {
    let trunc = trunc.min(w.len()).min(w2.len());
    let mut value = C64::new(0.0, 0.0);
    let mut weight = 1.0;
    let s2 = s * s;
    for (a, b) in w.iter().zip(w2).take(trunc) {
        value += weight * a * b.conj();
        weight *= s2;
    }
    2.0 * (1.0 - s) * value
}

/// Moving average `M_p(lambda) = (1/p) sum_{j<p} lambda^j`, by the closed form
/// `(1 - lambda^p)/(p (1 - lambda))` with a direct-sum fallback near `lambda = 1`.
pub fn moving_average(p: usize, lambda: C64) -> C64 {
    assert!(p >= 1);
    let one = C64::new(1.0, 0.0);
    if (lambda - one).norm() < 1e-8 {
        let mut acc = C64::new(0.0, 0.0);
        let theta = lambda.arg();
        for j in 0..p {
            acc += C64::from_polar(1.0, theta * j as f64);
        }
        return acc / p as f64;
    }
    let lam_p = C64::from_polar(1.0, lambda.arg() * p as f64);
    (one - lam_p) / ((one - lambda) * p as f64)
}

/// Parameters of a membership check against the intrinsically defined sequence
/// space: window exponent `delta`, decay exponent `delta_prime` (with
/// `0 < delta_prime < delta < 1/6`), probe direction `(gamma, l)`.
#[derive(Debug, Clone, Copy)]
pub struct MembershipParams {
    pub alpha: f64,
    pub gamma: f64,
    pub l: usize,
    pub delta: f64,
    pub delta_prime: f64,
}

/// The two defining suprema at one `n`, to be compared against `C n^{-delta'}`
/// and `C n^{1/2-delta'}` with a constant calibrated at a reference dimension.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub n: usize,
    pub component_sup: f64,
    pub norm_sup: f64,
    /// `n^{-delta'}` and `n^{1/2-delta'}` for threshold assembly.
    pub component_rate: f64,
    pub norm_rate: f64,
}

fn power_grid(center: f64, window: f64) -> Vec<f64> {
    let c = center.floor();
    let half = (window / 2.0).floor();
    let full = window.floor();
    vec![c, c - half, c + half, c - full, c + full]
}

/// Evaluates the membership suprema for a candidate pair `(w, Vw)` at this `n`:
/// over a 5-point grid of matrix powers inside the `n^{1-delta}` window,
/// `sup |<u^{a} w[n] - (Vw)[n], u^{g} e_l>|` and `sup ||u^{a} w[n] - (Vw)[n]||`.
pub fn f_membership_check(
    w: &[C64],
    vw: &[C64],
    state: &SpectralState,
    params: &MembershipParams,
) -> Result<MembershipReport> {
    let f = state.full_matrix()?;
    let n = state.n();
    let nf = n as f64;
    let eta = eigenbasis_coeffs(state, &w[..n])?;
    let vta = eigenbasis_coeffs(state, &vw[..n])?;
    let window = nf.powf(1.0 - params.delta);
    let alphas = power_grid(params.alpha * nf, window);
    let gammas = power_grid(params.gamma * nf, window);

    let mut norm_sup = 0.0f64;
    let mut component_sup = 0.0f64;
    for &a in &alphas {
        // diagonal difference coefficients at this power
        let diff: Vec<C64> = (0..n)
            .map(|j| {
                let rot = C64::from_polar(1.0, a * state.angles()[j]);
                rot * eta[j] - vta[j]
            })
            .collect();
        let norm = diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        norm_sup = norm_sup.max(norm);
        for &g in &gammas {
            let mut sum = C64::new(0.0, 0.0);
            for (j, d) in diff.iter().enumerate() {
                let back = C64::from_polar(1.0, -g * state.angles()[j]);
                sum += d * back * f[(params.l - 1, j)];
            }
            component_sup = component_sup.max(sum.norm());
        }
    }
    Ok(MembershipReport {
        n,
        component_sup,
        norm_sup,
        component_rate: nf.powf(-params.delta_prime),
        norm_rate: nf.powf(0.5 - params.delta_prime),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn y_map(pairs: &[(i64, f64)]) -> BTreeMap<i64, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn flow_identity_and_semigroup() {
        let y = y_map(&[(1, 0.37), (-2, -1.92), (3, 2.51)]);
        let mut coeffs = BTreeMap::new();
        coeffs.insert(1, C64::new(0.5, -0.25));
        coeffs.insert(-2, C64::new(0.0, 1.0));
        coeffs.insert(3, C64::new(-1.5, 0.75));
        let e = FlowElement::from_coeffs(coeffs);

        let id = apply_u(0.0, &e, &y).unwrap();
        assert_eq!(id, e);

        let (alpha, beta) = (0.83, -1.41);
        let ab = apply_u(alpha, &apply_u(beta, &e, &y).unwrap(), &y).unwrap();
        let sum = apply_u(alpha + beta, &e, &y).unwrap();
        for (k, c) in &ab.coeffs {
            let want = sum.coeffs[k];
            assert!((c - want).norm() <= 1e-14 * (1.0 + c.norm()));
            // moduli unchanged by the flow
            assert!((c.norm() - e.coeffs[k].norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn single_path_action_is_a_phase() {
        let y = y_map(&[(2, 1.25)]);
        let e = FlowElement::single(2);
        let out = apply_u(0.4, &e, &y).unwrap();
        let want = C64::from_polar(1.0, TAU * 0.4 * 1.25);
        assert!((out.coeffs[&2] - want).norm() < 1e-15);
    }

    #[test]
    fn cesaro_trivial_and_symmetry() {
        let ones = vec![C64::new(1.0, 0.0); 100];
        let est = cesaro_inner(&ones, &ones).unwrap();
        assert!((est.value - C64::new(1.0, 0.0)).norm() < 1e-15);

        let mut rng = RngStream::new(77, 0);
        let w: Vec<C64> = (0..200).map(|_| rng.standard_complex()).collect();
        let w2: Vec<C64> = (0..200).map(|_| rng.standard_complex()).collect();
        let a = cesaro_inner(&w, &w2).unwrap().value;
        let b = cesaro_inner(&w2, &w).unwrap().value;
        assert_eq!(a, b.conj());

        // Cauchy-Schwarz with a little slack
        let ww = cesaro_inner(&w, &w).unwrap().value.re;
        let vv = cesaro_inner(&w2, &w2).unwrap().value.re;
        assert!(a.norm_sqr() <= ww * vv + 1e-12);
    }

    #[test]
    fn gaussian_proxies_agree_across_methods() {
        // at s = 0.9999 the Abel tail condition needs ~25/(1-s) terms, so the
        // proxy stream is longer than the Cesaro prefix
        let mut rng = RngStream::new(88, 0);
        let long = 300_000;
        let prefix = 10_000;
        let w: Vec<C64> = (0..long).map(|_| rng.standard_complex()).collect();
        let w2: Vec<C64> = (0..long).map(|_| rng.standard_complex()).collect();

        let same = cesaro_inner(&w[..prefix], &w[..prefix]).unwrap().value;
        let cross = cesaro_inner(&w[..prefix], &w2[..prefix]).unwrap().value;
        assert!((same - C64::new(1.0, 0.0)).norm() <= 0.05);
        assert!(cross.norm() <= 0.05);

        let s = 0.9999;
        let abel = abel_inner(&w, &w, s, long).unwrap().value;
        assert!((abel - same).norm() <= 0.05, "abel {abel} vs cesaro {same}");
    }

    #[test]
    fn abel_truncation_guard() {
        let ones = vec![C64::new(1.0, 0.0); 10];
        assert!(matches!(
            abel_inner(&ones, &ones, 0.9, 10),
            Err(Error::TruncationTooCoarse { .. })
        ));
        // geometric series: (1-s)(1 + s + ... ) -> 1 with enough terms
        let long = vec![C64::new(1.0, 0.0); 4000];
        let est = abel_inner(&long, &long, 0.99, 4000).unwrap();
        assert!((est.value.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn holo_matches_its_series_form() {
        let mut rng = RngStream::new(99, 0);
        let n = 400;
        let w: Vec<C64> = (0..n).map(|_| rng.standard_complex()).collect();
        let w2: Vec<C64> = (0..n).map(|_| rng.standard_complex()).collect();
        let s = 0.995;
        let quad = holo_inner(&w, &w2, s, 2 * n + 1, n).unwrap().value;
        let series = holo_series(&w, &w2, s, n);
        assert!(
            (quad - series).norm() <= 1e-10,
            "quadrature {quad} vs series {series}"
        );
        assert!(matches!(
            holo_inner(&w, &w2, s, 2 * n, n),
            Err(Error::QuadratureTooCoarse { .. })
        ));

        // finitely-supported sequences die under (1-s) scaling as s -> 1
        let e1 = {
            let mut v = vec![C64::new(0.0, 0.0); 50];
            v[0] = C64::new(1.0, 0.0);
            v
        };
        let est = holo_inner(&e1, &e1, 0.99999, 128, 50).unwrap();
        assert!(est.value.norm() < 1e-4);
    }

    #[test]
    fn moving_average_closed_forms() {
        for p in 1..=7 {
            let m = moving_average(p, C64::new(1.0, 0.0));
            assert!((m - C64::new(1.0, 0.0)).norm() < 1e-14, "M_p(1) = 1");
        }
        let m2 = moving_average(2, C64::new(-1.0, 0.0));
        assert!(m2.norm() < 1e-15, "M_2(-1) = 0");

        // closed form vs direct sum on random phases
        let mut rng = RngStream::new(111, 0);
        for _ in 0..200 {
            let lambda = rng.unit_phase();
            let p = 1 + (rng.gen_range(0.0..40.0) as usize);
            let fast = moving_average(p, lambda);
            let mut slow = C64::new(0.0, 0.0);
            for j in 0..p {
                slow += C64::from_polar(1.0, lambda.arg() * j as f64);
            }
            slow /= p as f64;
            assert!((fast - slow).norm() < 1e-11);
        }
    }

    #[test]
    fn moving_average_contraction_sweep() {
        // |M_n(lambda)|^2 <= 1 - c ((n |lambda - 1|) ^ 1)^2 with c = 0.01.
        // M_1 is identically 1, so the contraction starts at n = 2.
        let mut rng = RngStream::new(112, 0);
        let c = 0.01;
        for _ in 0..100_000 {
            let lambda = rng.unit_phase();
            let n = 2 + (rng.gen_range(0.0..999.0) as usize);
            let m = moving_average(n, lambda).norm_sqr();
            let arg = (n as f64 * (lambda - C64::new(1.0, 0.0)).norm()).min(1.0);
            assert!(
                m <= 1.0 - c * arg * arg + 1e-12,
                "bound violated at n={n} lambda={lambda}: {m}"
            );
        }
    }

    #[test]
    fn flow_residual_on_exact_eigenvector_is_pure_phase() {
        use crate::haar::sample_update_coeffs;
        use crate::secular::{advance_state, solve_secular, SpectralState, StateMode};

        let mut rng = RngStream::new(121, 0);
        let mut state =
            SpectralState::initial(C64::from_polar(1.0, 2.2), StateMode::Full, 0).unwrap();
        for step in 0..24 {
            let mut stream = RngStream::new(121, step + 1);
            let coeffs = sample_update_coeffs(state.n(), &mut stream).unwrap();
            let report =
                solve_secular(&state, &coeffs, crate::secular::DEFAULT_SECULAR_TOL).unwrap();
            state = advance_state(&state, &coeffs, &report, 0).unwrap();
        }
        let n = state.n();
        let f = state.full_matrix().unwrap();
        let k = 1i64;
        let g: Vec<C64> = (0..n).map(|l| f[(l, 0)]).collect();

        // alpha = 0 is exactly zero
        assert_eq!(
            flow_residual(&state, &g, k, 0.0, FlowVariant::Normalized).unwrap(),
            0.0
        );

        // on an exact eigenvector the residual is the diagonal phase mismatch
        let alpha = 0.37;
        let got = flow_residual(&state, &g, k, alpha, FlowVariant::Normalized).unwrap();
        let power = (alpha * n as f64).floor();
        let y_hat = crate::eigenpath::scaled_angle(&state, k).unwrap();
        let want = (C64::from_polar(1.0, power * state.angles()[0])
            - C64::from_polar(1.0, TAU * alpha * y_hat))
        .norm();
        assert!((got - want).abs() <= 1e-9, "residual {got} vs phase {want}");
        assert!(want <= state.angles()[0] + 1e-12, "bounded by theta_k");

        // component residual obeys Cauchy-Schwarz against the absolute residual
        let comp = component_residual(&state, &g, k, alpha, 0.25, 1).unwrap();
        let abs = flow_residual(&state, &g, k, alpha, FlowVariant::Absolute).unwrap();
        assert!(comp <= abs + 1e-9);
    }

    #[test]
    fn weight_profile_counts_tails() {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(0, C64::new(1.0, 0.0));
        coeffs.insert(5, C64::new(2.0, 0.0));
        let e = FlowElement::from_coeffs(coeffs);
        let p = e.weight_profile(0.5);
        let want = (1.0 + 0f64.powf(1.5)) * 1.0 + (1.0 + 5f64.powf(1.5)) * 4.0;
        assert!((p - want).abs() < 1e-12);
    }
}
