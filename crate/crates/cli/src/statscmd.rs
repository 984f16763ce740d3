//! The `stats` subcommand: closed-form reference tables (sine-kernel pair
//! correlation, Toeplitz gap probabilities, moving-average contraction sweep),
//! plot-ready next to the Monte-Carlo outputs of `ensemble`.

use std::path::Path;

use cueflow::flow::moving_average;
use cueflow::rng::RngStream;
use cueflow::stats::{gap_probability, kernel_sine};
use cueflow::C64;

use crate::report::{fmt_f64, write_csv};
use crate::runner::RunResult;

pub fn write_theory_tables(dir: &Path, n: usize, meta: &[(&str, String)]) -> RunResult<()> {
    // rho_2 curve on the acceptance grid
    let rows: Vec<Vec<String>> = (1..=64)
        .map(|i| {
            let d = 0.0625 * i as f64;
            vec![fmt_f64(d), fmt_f64(1.0 - kernel_sine(d).powi(2))]
        })
        .collect();
    write_csv(&dir.join("rho2_theory.csv"), meta, &["delta", "rho2"], &rows)?;

    // gap probabilities for nested intervals, with the avoidance bound
    let mut gap_rows = Vec::new();
    for i in 1..=12 {
        let len = i as f64 * std::f64::consts::PI / 24.0;
        let g = gap_probability(n, 1.0, 1.0 + len)?;
        gap_rows.push(vec![
            fmt_f64(len),
            fmt_f64(g.probability),
            fmt_f64(g.avoidance_bound),
        ]);
    }
    write_csv(
        &dir.join("gap_probability.csv"),
        meta,
        &["length", "probability", "bound"],
        &gap_rows,
    )?;
    Ok(())
}

/// Sweeps the moving-average contraction bound; returns the worst margin
/// (positive = bound holds everywhere).
pub fn moving_average_sweep(trials: usize, c: f64, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 0xAB31);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let lambda = rng.unit_phase();
        let p = 2 + (rng.gen_range(0.0..999.0) as usize);
        let m = moving_average(p, lambda).norm_sqr();
        let arg = (p as f64 * (lambda - C64::new(1.0, 0.0)).norm()).min(1.0);
        worst = worst.min(1.0 - c * arg * arg - m);
    }
    worst
}

#[cfg(test)]
mod tests {
    #[test]
    fn sweep_margin_positive() {
        assert!(super::moving_average_sweep(20_000, 0.01, 5) > 0.0);
    }
}
