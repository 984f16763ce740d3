//! Cross-module statistical checks: distributional agreement between the two
//! sampling modes, scaled-angle ensembles against the dense reference,
//! renormalizer stabilization, and the coordinate laws along the recursion.

use rayon::prelude::*;

use cueflow::eigenpath::{t_coords, EigenPath};
use cueflow::haar::{sample_sphere, sample_update_coeffs};
use cueflow::oracle;
use cueflow::rng::{Purpose, RngStream};
use cueflow::secular::{
    advance_state, decompose_in_eigenbasis, solve_secular, Eigvecs, SpectralState, StateMode,
    DEFAULT_SECULAR_TOL,
};
use cueflow::stats;

/// Runs the recursion to `n_max`; `matrix_mode` draws sphere targets and
/// decomposes them in the tracked eigenbasis, coefficient mode samples the
/// coefficients directly. Returns the final state and the k = 1 path.
fn run_recursion(
    seed: u64,
    n_max: usize,
    mode: StateMode,
    l_max: usize,
    matrix_mode: bool,
) -> (SpectralState, EigenPath) {
    let mut rng = RngStream::for_step(seed, 1, Purpose::Sphere);
    let x1 = sample_sphere(1, &mut rng);
    let mut state = SpectralState::initial(x1.entries()[0], mode, l_max).unwrap();
    let mut path = EigenPath::new(1);
    while state.n() < n_max {
        let step = (state.n() + 1) as u64;
        let coeffs = if matrix_mode {
            let mut stream = RngStream::for_step(seed, step, Purpose::Sphere);
            let x = sample_sphere(state.n() + 1, &mut stream);
            decompose_in_eigenbasis(&x, &state).unwrap()
        } else {
            let mut stream = RngStream::for_step(seed, step, Purpose::Coeffs);
            sample_update_coeffs(state.n(), &mut stream).unwrap()
        };
        let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
        let next = advance_state(&state, &coeffs, &report, l_max).unwrap();
        path.advance(&state, &next, &coeffs, &report).unwrap();
        state = next;
    }
    (state, path)
}

#[test]
fn matrix_and_coeff_modes_agree_in_law() {
    // pooled eigenangle ensembles at n = 8, 1e4 samples per mode; the
    // two-sample KS critical value is taken at the per-matrix sample count,
    // which is conservative under the within-matrix dependence
    let n = 8;
    let samples = 10_000u64;
    let matrix_angles: Vec<f64> = (0..samples)
        .into_par_iter()
        .flat_map_iter(|seed| {
            run_recursion(seed + 1, n, StateMode::Full, 0, true)
                .0
                .angles()
                .to_vec()
        })
        .collect();
    let coeff_angles: Vec<f64> = (0..samples)
        .into_par_iter()
        .flat_map_iter(|seed| {
            run_recursion(seed + 1_000_000, n, StateMode::None, 0, false)
                .0
                .angles()
                .to_vec()
        })
        .collect();
    let d = stats::ks_two_sample(&matrix_angles, &coeff_angles);
    let critical = stats::ks_two_sample_critical(0.01, samples as usize, samples as usize);
    assert!(
        d < critical,
        "two-sample KS {d} exceeds level-0.01 critical value {critical}"
    );
}

#[test]
fn scaled_first_angles_match_dense_reference() {
    // coupled recursion vs independent dense eigensolves at the same n:
    // mean scaled first angle and mean first gap within 3 combined sigma
    let n = 256;
    let samples = 300u64;
    let rec: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|seed| {
            let state = run_recursion(7_000 + seed, n, StateMode::None, 0, false).0;
            let s1 = cueflow::eigenpath::scaled_angle(&state, 1).unwrap();
            let s2 = cueflow::eigenpath::scaled_angle(&state, 2).unwrap();
            (s1, s2 - s1)
        })
        .collect();
    let dense: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|seed| {
            let mut rng = RngStream::for_step(9_000_000 + seed, 0, Purpose::Sphere);
            let scaled = oracle::dense_haar_scaled_angles(n, &mut rng).unwrap();
            (scaled[0], scaled[1] - scaled[0])
        })
        .collect();
    let stats_of = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        (m, (v / xs.len() as f64).sqrt())
    };
    for pick in [0usize, 1] {
        let a: Vec<f64> = rec.iter().map(|t| if pick == 0 { t.0 } else { t.1 }).collect();
        let b: Vec<f64> = dense.iter().map(|t| if pick == 0 { t.0 } else { t.1 }).collect();
        let (ma, sa) = stats_of(&a);
        let (mb, sb) = stats_of(&b);
        let sigma = (sa * sa + sb * sb).sqrt();
        assert!(
            (ma - mb).abs() <= 3.0 * sigma,
            "statistic {pick}: recursion {ma} vs dense {mb} (3 sigma {})",
            3.0 * sigma
        );
    }
}

#[test]
fn renormalizer_magnitude_stabilizes() {
    // |D_1|^2 / n settles: relative change between n = 256 and n = 512 below
    // 0.5 in median over 50 seeds
    let changes: Vec<f64> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let (state_mid, path_mid) = run_recursion(3_000 + seed, 256, StateMode::None, 0, false);
            let d_mid = path_mid.abs_d().powi(2) / state_mid.n() as f64;
            let (state_end, path_end) = run_recursion(3_000 + seed, 512, StateMode::None, 0, false);
            let d_end = path_end.abs_d().powi(2) / state_end.n() as f64;
            (d_end - d_mid).abs() / d_mid
        })
        .collect();
    let mut xs = changes;
    xs.sort_by(f64::total_cmp);
    let med = xs[xs.len() / 2];
    assert!(med < 0.5, "median relative change {med}");
}

#[test]
fn t_coordinates_approach_exponential_law() {
    // n |<f_1, e_1>|^2 = |t_{1,1}|^2 at n = 256 over 2000 seeds vs Exp(1)
    let n = 256;
    let samples: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|seed| {
            let (state, path) = run_recursion(40_000 + seed, n, StateMode::Coords, 1, false);
            let t = t_coords(&path, &state, 1).unwrap();
            t[0].norm_sqr()
        })
        .collect();
    let report = stats::exp1_test(&samples).unwrap();
    assert!(report.p_value >= 0.01, "Exp(1) KS p = {}", report.p_value);
}

#[test]
fn t_coordinates_stabilize_along_doublings() {
    // |t_{1,1}(n) - t_{1,1}(2n)| decreasing in median along n in {128, 256, 512}
    let diffs: Vec<[f64; 3]> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let mut out = [0.0f64; 3];
            let mut prev: Option<cueflow::C64> = None;
            for (i, n) in [128usize, 256, 512, 1024].iter().enumerate() {
                let (state, path) = run_recursion(70_000 + seed, *n, StateMode::Coords, 1, false);
                let t = t_coords(&path, &state, 1).unwrap()[0];
                if let Some(p) = prev {
                    out[i - 1] = (t - p).norm();
                }
                prev = Some(t);
            }
            out
        })
        .collect();
    let med = |i: usize| {
        let mut xs: Vec<f64> = diffs.iter().map(|d| d[i]).collect();
        xs.sort_by(f64::total_cmp);
        xs[xs.len() / 2]
    };
    let (m0, m1, m2) = (med(0), med(1), med(2));
    assert!(
        m0 > m1 && m1 > m2,
        "medians not decreasing: {m0} {m1} {m2}"
    );
}

#[test]
fn tracked_coordinates_do_not_vanish() {
    // |g_{k,l}| at the final dimension exceeds 1e-6 in at least 95% of seeds,
    // for every tracked (k, l)
    let seeds = 100u64;
    let l_max = 8;
    let ks = [-4i64, -3, -2, -1, 1, 2, 3, 4];
    let per_seed: Vec<Vec<Vec<f64>>> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = RngStream::for_step(80_000 + seed, 1, Purpose::Sphere);
            let x1 = sample_sphere(1, &mut rng);
            let mut state = SpectralState::initial(x1.entries()[0], StateMode::Coords, l_max).unwrap();
            let mut paths: Vec<EigenPath> = ks.iter().map(|&k| EigenPath::new(k)).collect();
            while state.n() < 512 {
                let mut stream =
                    RngStream::for_step(80_000 + seed, (state.n() + 1) as u64, Purpose::Coeffs);
                let coeffs = sample_update_coeffs(state.n(), &mut stream).unwrap();
                let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
                let next = advance_state(&state, &coeffs, &report, l_max).unwrap();
                for p in paths.iter_mut() {
                    p.advance(&state, &next, &coeffs, &report).unwrap();
                }
                state = next;
            }
            paths
                .iter()
                .map(|p| {
                    let (idx, _) = state.resolve_index(p.k).unwrap();
                    (1..=l_max)
                        .map(|l| (p.d() * state.coord(idx, l).unwrap()).norm())
                        .collect()
                })
                .collect()
        })
        .collect();
    for (ki, k) in ks.iter().enumerate() {
        for l in 0..l_max {
            let good = per_seed
                .iter()
                .filter(|seed_data| seed_data[ki][l] > 1e-6)
                .count();
            assert!(
                good >= 95,
                "g_{{{k},{}}} nonvanishing in only {good}/100 seeds",
                l + 1
            );
        }
    }
}

#[test]
fn coords_slab_coordinate_law_matches_beta() {
    // |<f_k, e_l>|^2 at n = 64 over 1e4 draws (window indices pooled by their
    // common law) against Beta(1, 63)
    let n = 64;
    let samples: Vec<f64> = (0..2500u64)
        .into_par_iter()
        .flat_map_iter(|seed| {
            let (state, _) = run_recursion(90_000 + seed, n, StateMode::Coords, 2, false);
            let Eigvecs::Coords(slab) = state.eigvecs() else {
                panic!("coords mode");
            };
            vec![
                slab[(0, 0)].norm_sqr(),
                slab[(0, 1)].norm_sqr(),
                slab[(1, 0)].norm_sqr(),
                slab[(1, 1)].norm_sqr(),
            ]
        })
        .collect();
    let report = stats::beta_delocalization_test(&samples, n).unwrap();
    assert!(report.p_value >= 0.01, "KS p = {}", report.p_value);
}

/// The literal asymptotic-event claim at desk scale. The thresholds
/// `n^{-1/2+eps}` and `[n^{-5/3-eps}, n^{-1+eps}]` with eps = 0.1 sit below the
/// typical coefficient maxima and mean gap until astronomically large n (the
/// upper gap bound is smaller than the mean gap 2 pi / n whenever
/// n^eps < 2 pi, i.e. for all n < ~10^8), so violations at n >= 64 are
/// expected rather than exceptional. Kept ignored as documentation of the
/// asymptotic statement; the event mechanics are tested in the stats module.
#[test]
#[ignore = "asymptotic event thresholds are vacuous at desk-scale n; see decisions ledger"]
fn event_flags_hold_at_desk_scale() {
    let violations: usize = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = RngStream::for_step(95_000 + seed, 1, Purpose::Sphere);
            let x1 = sample_sphere(1, &mut rng);
            let mut state = SpectralState::initial(x1.entries()[0], StateMode::None, 0).unwrap();
            let mut count = 0usize;
            while state.n() < 256 {
                let mut stream =
                    RngStream::for_step(95_000 + seed, (state.n() + 1) as u64, Purpose::Coeffs);
                let coeffs = sample_update_coeffs(state.n(), &mut stream).unwrap();
                let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
                state = advance_state(&state, &coeffs, &report, 0).unwrap();
                if state.n() >= 64 {
                    let max_mu = coeffs.mu.iter().map(|m| m.norm()).fold(0.0f64, f64::max);
                    let flags = stats::event_flags(state.angles(), max_mu, coeffs.nu.norm(), 0.1);
                    if !(flags.e2_ok && flags.e3_min_ok && flags.e3_max_ok) {
                        count += 1;
                    }
                }
            }
            count
        })
        .sum();
    assert_eq!(violations, 0, "E2/E3 violations at n >= 64: {violations}");
}
