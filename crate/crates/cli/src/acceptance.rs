//! The verification suite: one function per criterion, each printing a single
//! pass/fail line. `verify` runs them all (or the quick subset); the
//! `acceptance` integration test asserts every one.
//!
//! Everything here uses pinned tolerances. The asymptotic statements are
//! tested as exact oracle equivalences, closed forms, and Monte-Carlo
//! statistics whose acceptance bands come from estimated sigmas, never
//! hard-coded variances.

use std::time::Instant;

use cueflow::eigenpath::{martingale_phase_test, EigenPath};
use cueflow::flow::{abel_inner, cesaro_inner, holo_inner, holo_series, moving_average};
use cueflow::haar::{sample_sphere, sample_update_coeffs, MatrixTower, UpdateCoeffs};
use cueflow::reflect::ComplexVec;
use cueflow::rng::{Purpose, RngStream};
use cueflow::secular::{
    advance_state, decompose_in_eigenbasis, interlaces, solve_secular, SpectralState, StateMode,
    DEFAULT_SECULAR_TOL,
};
use cueflow::stats::{
    beta_delocalization_test, empirical_pair_correlation, exp1_test, gap_probability,
    kernel_sine, trace_moments, PointSample,
};
use cueflow::C64;

use crate::config::{Mode, RunConfig};
use crate::ensemble::map_seeds;
use crate::flowcmd::flow_ladder;
use crate::runner::run_trajectory;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const PI: f64 = std::f64::consts::PI;
const TAU: f64 = 2.0 * PI;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub details: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} [{}] {:<22} {:>7.1}s  {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.details
        )
    }
}

struct Check {
    pass: bool,
    details: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self {
            pass: true,
            details: Vec::new(),
        }
    }
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.pass = false;
            self.details.push(what());
        }
    }
    fn note(&mut self, s: String) {
        self.details.push(s);
    }
    fn finish(self, id: usize, name: &'static str, t0: Instant) -> CriterionResult {
        CriterionResult {
            id,
            name,
            pass: self.pass,
            details: self.details.join("; "),
            seconds: t0.elapsed().as_secs_f64(),
        }
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// 1. Worked closed-form case of the 1 -> 2 step, all values to 1e-12.
pub fn criterion_1() -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();

    let state = SpectralState::initial(C64::new(-1.0, 0.0), StateMode::Full, 2).unwrap();
    let coeffs = UpdateCoeffs::new(
        vec![C64::new(1.0 / SQRT2, 0.0)],
        C64::new(1.0 / SQRT2, 0.0),
    );
    let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
    c.require(
        (report.new_angles[0] - PI / 4.0).abs() <= 1e-12
            && (report.new_angles[1] - 7.0 * PI / 4.0).abs() <= 1e-12,
        || format!("angles {:?}", report.new_angles),
    );
    c.require(
        (report.h[0] - (1.0 - 1.0 / SQRT2)).abs() <= 1e-12,
        || format!("h1 = {}", report.h[0]),
    );

    // u_2 from the explicit tower with the same targets
    let mut tower = MatrixTower::new();
    tower
        .extend_with(&ComplexVec::new(vec![C64::new(-1.0, 0.0)]))
        .unwrap();
    tower
        .extend_with(&ComplexVec::new(vec![
            C64::new(-1.0 / SQRT2, 0.0),
            C64::new(1.0 / SQRT2, 0.0),
        ]))
        .unwrap();
    let u = tower.matrix();
    let trace = u[(0, 0)] + u[(1, 1)];
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    c.require(
        (trace - C64::new(SQRT2, 0.0)).norm() <= 1e-12,
        || format!("trace {trace}"),
    );
    c.require((det - C64::new(1.0, 0.0)).norm() <= 1e-12, || {
        format!("det {det}")
    });
    c.note(format!(
        "angles ({:.15}, {:.15}), h1 {:.15}",
        report.new_angles[0], report.new_angles[1], report.h[0]
    ));
    c.finish(1, "worked closed form", t0)
}

/// 2. Oracle equivalence: 100 MATRIX trajectories to n = 48, every step checked
/// against the dense eigensolver (angles 1e-9, phase-aligned coordinates 1e-7,
/// strict interlacing, rank-one defect sigma_2 <= 1e-10).
pub fn criterion_2(parallelism: usize) -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let seeds: Vec<u64> = (2001..2101).collect();
    let results = map_seeds(parallelism, &seeds, |seed| {
        let config = RunConfig {
            seed,
            mode: Mode::Matrix,
            n_max: 48,
            l_coords: 0,
            k_window: vec![1],
            ..RunConfig::default()
        };
        // interlacing asserted per-step on top of the oracle checks
        let mut traj = crate::runner::Trajectory::new(config).map_err(|e| e.to_string())?;
        while traj.n() < 48 {
            let before = traj.state.angles().to_vec();
            traj.step().map_err(|e| e.to_string())?;
            if !interlaces(&before, traj.state.angles()) {
                return Err(format!("interlacing violated at n = {}", traj.n()));
            }
            traj.oracle_check().map_err(|e| e.to_string())?;
        }
        Ok::<_, String>(())
    });
    let failures: Vec<String> = results.into_iter().filter_map(|r| r.err()).collect();
    c.require(failures.is_empty(), || {
        format!("{} seeds failed: {}", failures.len(), failures[0].clone())
    });
    c.note("100 seeds, n = 48, all steps within (1e-9, 1e-7, 1e-10)".into());
    c.finish(2, "oracle equivalence", t0)
}

/// 3. Haar correctness: n = 16 coefficient-mode samples, squared trace moments
/// within 3 estimated sigma of j for j = 1..5.
pub fn criterion_3(parallelism: usize) -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let seeds: Vec<u64> = (30_000..130_000).collect();
    let samples = map_seeds(parallelism, &seeds, |seed| {
        angles_only_trajectory(seed, 16).expect("trajectory")
    });
    let rows = trace_moments(&samples, 5).unwrap();
    for row in &rows {
        c.require(
            (row.mean - row.target).abs() <= 3.0 * row.sigma,
            || format!("j={}: {} vs {} (3s={})", row.j, row.mean, row.target, 3.0 * row.sigma),
        );
    }
    c.note(
        rows.iter()
            .map(|r| format!("j{}:{:.3}", r.j, r.mean))
            .collect::<Vec<_>>()
            .join(" "),
    );
    c.finish(3, "Haar trace moments", t0)
}

fn angles_only_trajectory(seed: u64, n_max: usize) -> cueflow::Result<Vec<f64>> {
    let mut rng = RngStream::for_step(seed, 1, Purpose::Sphere);
    let x1 = sample_sphere(1, &mut rng);
    let mut state = SpectralState::initial(x1.entries()[0], StateMode::None, 0)?;
    while state.n() < n_max {
        let mut stream = RngStream::for_step(seed, (state.n() + 1) as u64, Purpose::Coeffs);
        let coeffs = sample_update_coeffs(state.n(), &mut stream)?;
        let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL)?;
        state = advance_state(&state, &coeffs, &report, 0)?;
    }
    Ok(state.angles().to_vec())
}

/// 4. Sine-kernel pair correlation at n = 64 over 2e4 coefficient-mode samples:
/// per-bin deviation from 1 - sinc^2 at most max(0.03, 4 sigma_bin).
pub fn criterion_4(parallelism: usize) -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let seeds: Vec<u64> = (400_000..420_000).collect();
    let samples: Vec<PointSample> = map_seeds(parallelism, &seeds, |seed| {
        let angles = angles_only_trajectory(seed, 64).expect("trajectory");
        PointSample::from_angles(&angles, seed)
    });
    let hist = empirical_pair_correlation(&samples, 0.25, 4.0, 0.25).unwrap();
    let mut worst = 0.0f64;
    for (i, center) in hist.centers().iter().enumerate() {
        let theory = 1.0 - kernel_sine(*center).powi(2);
        let dev = (hist.density[i] - theory).abs();
        let tol = (4.0 * hist.sigma[i]).max(0.03);
        worst = worst.max(dev / tol);
        c.require(dev <= tol, || {
            format!("bin {center}: |{} - {theory}| > {tol}", hist.density[i])
        });
    }
    c.note(format!("worst deviation/tolerance = {worst:.3}"));
    c.finish(4, "pair correlation", t0)
}

/// 5. Gap probability at n = 12 for an interval of length pi/6: Toeplitz
/// determinant vs 1e5-sample Monte Carlo within 3 MC sigma; boundaries exact.
pub fn criterion_5(parallelism: usize) -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let n = 12;
    let (a, b) = (1.0, 1.0 + PI / 6.0);
    let g = gap_probability(n, a, b).unwrap();

    let seeds: Vec<u64> = (500_000..600_000).collect();
    let hits = map_seeds(parallelism, &seeds, |seed| {
        let angles = angles_only_trajectory(seed, n).expect("trajectory");
        angles.iter().all(|&t| t < a || t > b) as u64
    });
    let s = seeds.len() as f64;
    let p_hat = hits.iter().sum::<u64>() as f64 / s;
    let sigma = (p_hat * (1.0 - p_hat) / s).sqrt();
    c.require(
        (g.probability - p_hat).abs() <= 3.0 * sigma,
        || format!("det {} vs MC {p_hat} (3s={})", g.probability, 3.0 * sigma),
    );
    c.require(g.probability <= g.avoidance_bound + 1e-9, || {
        format!("bound {} exceeded", g.avoidance_bound)
    });

    let full = gap_probability(n, 0.0, TAU).unwrap();
    c.require(full.probability.abs() <= 1e-10, || {
        format!("full-circle avoidance {}", full.probability)
    });
    let empty = gap_probability(n, a, a).unwrap();
    c.require((empty.probability - 1.0).abs() <= 1e-12, || {
        format!("empty interval {}", empty.probability)
    });
    c.note(format!(
        "det {:.6} vs MC {:.6} +- {:.6}",
        g.probability, p_hat, sigma
    ));
    c.finish(5, "gap probability", t0)
}

/// 6. Delocalization at n = 64 over 2000 seeds: |<f_1, e_1>|^2 passes KS against
/// Beta(1, 63) at level 0.01, and n |t_{1,1}|^2 against Exp(1) likewise.
pub fn criterion_6(parallelism: usize) -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let n = 64;
    let seeds: Vec<u64> = (60_000..62_000).collect();
    let coords = map_seeds(parallelism, &seeds, |seed| {
        let config = RunConfig {
            seed,
            mode: Mode::Coeff,
            n_max: n,
            l_coords: 1,
            k_window: vec![1],
            ..RunConfig::default()
        };
        let traj = run_trajectory(&config, None, None, false).expect("trajectory");
        traj.state.coord(1, 1).expect("coords mode").norm_sqr()
    });
    let beta = beta_delocalization_test(&coords, n).unwrap();
    c.require(beta.p_value >= 0.01, || {
        format!("Beta(1,63) KS p = {}", beta.p_value)
    });
    let scaled: Vec<f64> = coords.iter().map(|&x| n as f64 * x).collect();
    let exp = exp1_test(&scaled).unwrap();
    c.require(exp.p_value >= 0.01, || {
        format!("Exp(1) KS p = {}", exp.p_value)
    });
    c.note(format!(
        "KS p: Beta {:.3}, Exp {:.3}",
        beta.p_value, exp.p_value
    ));
    c.finish(6, "delocalization", t0)
}

/// 7. Coupled convergence for k = 1 over 50 seeds: medians of
/// |scaled(n) - scaled(2n)| and |g_{1,1}(n) - g_{1,1}(2n)| strictly decreasing
/// along n in {256, 512, 1024}; angle-estimate ratio within 0.2 of 1 in median
/// at n = 1024.
pub fn criterion_7(parallelism: usize) -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let seeds: Vec<u64> = (7001..7051).collect();
    let per_seed = map_seeds(parallelism, &seeds, |seed| {
        let config = RunConfig {
            seed,
            mode: Mode::Coeff,
            n_max: 2048,
            l_coords: 1,
            k_window: vec![1],
            ..RunConfig::default()
        };
        let traj = run_trajectory(&config, None, None, false).expect("trajectory");
        let path = &traj.paths[0];
        let pick = |n: usize| {
            path.samples
                .iter()
                .find(|s| s.n == n)
                .unwrap_or_else(|| panic!("milestone {n} missing"))
        };
        let angle_diffs: Vec<f64> = [256, 512, 1024]
            .iter()
            .map(|&n| (pick(n).scaled_angle - pick(2 * n).scaled_angle).abs())
            .collect();
        let g_diffs: Vec<f64> = [256, 512, 1024]
            .iter()
            .map(|&n| (pick(n).g[0] - pick(2 * n).g[0]).norm())
            .collect();
        let ratio_1024 = pick(1024).ratio.expect("ratio recorded");
        (angle_diffs, g_diffs, ratio_1024)
    });

    for (what, idx) in [("scaled angle", 0usize), ("g_{1,1}", 1)] {
        let meds: Vec<f64> = (0..3)
            .map(|i| {
                let mut xs: Vec<f64> = per_seed
                    .iter()
                    .map(|(a, g, _)| if idx == 0 { a[i] } else { g[i] })
                    .collect();
                median(&mut xs)
            })
            .collect();
        c.require(meds[0] > meds[1] && meds[1] > meds[2], || {
            format!("{what} medians not strictly decreasing: {meds:?}")
        });
        c.note(format!(
            "{what} medians {:.4} > {:.4} > {:.4}",
            meds[0], meds[1], meds[2]
        ));
    }
    let mut ratios: Vec<f64> = per_seed.iter().map(|(_, _, r)| (r - 1.0).abs()).collect();
    let med_ratio = median(&mut ratios);
    c.require(med_ratio <= 0.2, || {
        format!("median |ratio - 1| = {med_ratio}")
    });
    c.note(format!("median |ratio-1| at 1024 = {med_ratio:.4}"));
    c.finish(7, "coupled convergence", t0)
}

/// 8. Martingale property at n = 16: phase-resampled conditional mean within
/// 3 sigma of the previous coordinate, 1e4 redraws, (k, l) in {1,2}^2.
pub fn criterion_8() -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let seed = 888;
    let mut rng = RngStream::for_step(seed, 1, Purpose::Sphere);
    let x1 = sample_sphere(1, &mut rng);
    let mut state = SpectralState::initial(x1.entries()[0], StateMode::Full, 0).unwrap();
    let mut paths = [EigenPath::new(1), EigenPath::new(2)];
    while state.n() < 16 {
        let mut stream = RngStream::for_step(seed, (state.n() + 1) as u64, Purpose::Coeffs);
        let coeffs = sample_update_coeffs(state.n(), &mut stream).unwrap();
        let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
        let next = advance_state(&state, &coeffs, &report, 0).unwrap();
        for p in paths.iter_mut() {
            p.advance(&state, &next, &coeffs, &report).unwrap();
        }
        state = next;
    }
    let mut stream = RngStream::for_step(seed, 17, Purpose::Coeffs);
    let coeffs = sample_update_coeffs(16, &mut stream).unwrap();
    let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL).unwrap();
    for (k, path) in [(1usize, &paths[0]), (2, &paths[1])] {
        for l in [1usize, 2] {
            let mut rng = RngStream::for_step(seed, (16 * k + l) as u64, Purpose::PhaseResample);
            let rep = martingale_phase_test(
                &state, &coeffs, &report, path.d(), k, l, 10_000, &mut rng, true,
            )
            .unwrap();
            let dev = (rep.mean - rep.prev).norm();
            c.require(dev <= 3.0 * rep.sigma, || {
                format!("(k={k},l={l}): |mean-prev| = {dev} > 3s = {}", 3.0 * rep.sigma)
            });
        }
    }
    c.note("4 coordinate pairs within 3 sigma".into());
    c.finish(8, "martingale resampling", t0)
}

/// 9. Flow residuals for k = 1, alpha = 1/2: median over 50 seeds of the
/// normalized residual non-increasing along n in {64, 128, 256, 512}, final
/// strictly below initial; alpha = 0 exactly zero.
pub fn criterion_9(parallelism: usize) -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let ladder = [64usize, 128, 256, 512];
    let seeds: Vec<u64> = (9001..9051).collect();
    let rows = map_seeds(parallelism, &seeds, |seed| {
        flow_ladder(seed, &ladder, 512, &[1], &[0.0, 0.5], DEFAULT_SECULAR_TOL)
            .expect("flow ladder")
    });
    for per_seed in &rows {
        for r in per_seed.iter().filter(|r| r.alpha == 0.0) {
            c.require(r.residual == 0.0, || {
                format!("alpha = 0 residual {} at n = {}", r.residual, r.n)
            });
        }
    }
    let mut medians = Vec::new();
    for &n in &ladder {
        let mut xs: Vec<f64> = rows
            .iter()
            .flat_map(|per_seed| {
                per_seed
                    .iter()
                    .filter(|r| r.alpha == 0.5 && r.n == n)
                    .map(|r| r.normalized_residual)
            })
            .collect();
        medians.push(median(&mut xs));
    }
    for w in medians.windows(2) {
        c.require(w[1] <= w[0], || {
            format!("median residuals not non-increasing: {medians:?}")
        });
    }
    c.require(
        *medians.last().unwrap() < medians[0],
        || format!("final {} not strictly below initial {}", medians[3], medians[0]),
    );
    c.note(format!(
        "medians {:.4} / {:.4} / {:.4} / {:.4}",
        medians[0], medians[1], medians[2], medians[3]
    ));
    c.finish(9, "flow residuals", t0)
}

/// 10. Averaged inner products on Gaussian proxies: Cesaro within 0.05 of the
/// Kronecker delta; Cesaro vs Abel(s = 0.9999) within 0.05; the holomorphic
/// quadrature equal to its series form within 1e-10 at matched truncation.
pub fn criterion_10() -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let prefix = 10_000;
    let long = 300_000;
    let mut rng_w = RngStream::new(1010, 1);
    let mut rng_v = RngStream::new(1010, 2);
    let w: Vec<C64> = (0..long).map(|_| rng_w.standard_complex()).collect();
    let v: Vec<C64> = (0..long).map(|_| rng_v.standard_complex()).collect();

    let same = cesaro_inner(&w[..prefix], &w[..prefix]).unwrap().value;
    let cross = cesaro_inner(&w[..prefix], &v[..prefix]).unwrap().value;
    c.require((same - C64::new(1.0, 0.0)).norm() <= 0.05, || {
        format!("cesaro <w,w> = {same}")
    });
    c.require(cross.norm() <= 0.05, || format!("cesaro <w,v> = {cross}"));

    let abel = abel_inner(&w, &w, 0.9999, long).unwrap().value;
    c.require((abel - same).norm() <= 0.05, || {
        format!("abel {abel} vs cesaro {same}")
    });

    // matched (s, truncation) identity between the quadrature and series forms
    let (s_small, trunc) = (0.995, 12_000);
    let quad = holo_inner(&w, &v, s_small, 2 * trunc + 1, trunc).unwrap().value;
    let series = holo_series(&w, &v, s_small, trunc);
    c.require((quad - series).norm() <= 1e-10, || {
        format!("holo quadrature {quad} vs series {series}")
    });
    let abel_s2 = abel_inner(&w, &v, s_small * s_small, trunc).unwrap().value;
    let rescaled = abel_s2 * (2.0 * (1.0 - s_small) / (1.0 - s_small * s_small));
    c.require((quad - rescaled).norm() <= 1e-10, || {
        format!("holo {quad} vs rescaled abel {rescaled}")
    });
    c.note(format!(
        "cesaro {:.4}, cross {:.4}, abel {:.4}",
        same.re,
        cross.norm(),
        abel.re
    ));
    c.finish(10, "averaged inner products", t0)
}

/// 11. Moving-average contraction sweep: 1e5 random (n in [2,1000], lambda)
/// satisfy |M_n|^2 <= 1 - 0.01 ((n |lambda-1|) ^ 1)^2.
pub fn criterion_11() -> CriterionResult {
    let t0 = Instant::now();
    let mut c = Check::new();
    let c_bound = 0.01;
    let mut rng = RngStream::new(1111, 0);
    let mut worst_margin = f64::INFINITY;
    for _ in 0..100_000 {
        let lambda = rng.unit_phase();
        let n = 2 + (rng.gen_range(0.0..999.0) as usize);
        let m = moving_average(n, lambda).norm_sqr();
        let arg = (n as f64 * (lambda - C64::new(1.0, 0.0)).norm()).min(1.0);
        worst_margin = worst_margin.min(1.0 - c_bound * arg * arg - m);
    }
    c.require(worst_margin >= -1e-12, || {
        format!("bound violated by {worst_margin}")
    });
    c.note(format!("worst margin {worst_margin:.4} (c = {c_bound})"));
    c.finish(11, "moving-average bound", t0)
}

/// All criteria, or the quick (sub-5-minute) subset.
pub fn run_all(quick: bool, parallelism: usize) -> Vec<CriterionResult> {
    let mut results = Vec::new();
    let mut push = |r: CriterionResult| {
        println!("{}", r.line());
        results.push(r);
    };
    push(criterion_1());
    if !quick {
        push(criterion_2(parallelism));
    }
    push(criterion_3(parallelism));
    if !quick {
        push(criterion_4(parallelism));
    }
    push(criterion_5(parallelism));
    if !quick {
        push(criterion_6(parallelism));
        push(criterion_7(parallelism));
    }
    push(criterion_8());
    if !quick {
        push(criterion_9(parallelism));
    }
    push(criterion_10());
    push(criterion_11());
    results
}

/// Oracle-independent consistency probe used by tests: decompose a sphere
/// sample in a FULL state's eigenbasis and re-solve.
pub fn matrix_coeff_roundtrip(seed: u64, n: usize) -> cueflow::Result<f64> {
    let mut rng = RngStream::for_step(seed, 1, Purpose::Sphere);
    let x1 = sample_sphere(1, &mut rng);
    let mut state = SpectralState::initial(x1.entries()[0], StateMode::Full, 0)?;
    let mut worst = 0.0f64;
    while state.n() < n {
        let mut stream = RngStream::for_step(seed, (state.n() + 1) as u64, Purpose::Sphere);
        let x = sample_sphere(state.n() + 1, &mut stream);
        let coeffs = decompose_in_eigenbasis(&x, &state)?;
        worst = worst.max((coeffs.norm_sqr() - 1.0).abs());
        let report = solve_secular(&state, &coeffs, DEFAULT_SECULAR_TOL)?;
        state = advance_state(&state, &coeffs, &report, 0)?;
    }
    Ok(worst)
}
