//! Seed-parallel ensembles with deterministic merging.
//!
//! Each worker owns one trajectory; results are collected in seed order before
//! any reduction, so the merged statistics are identical at any parallelism
//! degree. Failed seeds are reported, not silently dropped.

use std::path::Path;

use serde_json::json;

use cueflow::secular::Eigvecs;
use cueflow::stats::{
    self, event_diagnostics, CorrelationHistogram, EventSummary, PointSample, TraceMomentRow,
};

use crate::config::RunConfig;
use crate::report::{fmt_f64, write_csv};
use crate::runner::{run_trajectory, RunError, RunResult, Trajectory};

/// What one seed contributes to the merge.
pub struct SeedOutcome {
    pub seed: u64,
    pub trajectory: Trajectory,
}

pub struct EnsembleOutcome {
    pub outcomes: Vec<SeedOutcome>,
    pub failures: Vec<(u64, String)>,
}

/// Runs `config.ensemble` trajectories on seeds `seed, seed+1, ...` using a
/// dedicated thread pool of `config.parallelism` workers (0 = all cores).
pub fn run_ensemble(config: &RunConfig) -> RunResult<EnsembleOutcome> {
    let seeds: Vec<u64> = (0..config.ensemble as u64)
        .map(|i| config.seed + i)
        .collect();
    let results = map_seeds(config.parallelism, &seeds, |seed| {
        let cfg = RunConfig {
            seed,
            ..config.clone()
        };
        run_trajectory(&cfg, None, None, false)
    });

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (seed, result) in seeds.into_iter().zip(results) {
        match result {
            Ok(trajectory) => outcomes.push(SeedOutcome { seed, trajectory }),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    Ok(EnsembleOutcome { outcomes, failures })
}

/// Seed-order-preserving parallel map on a local pool.
pub fn map_seeds<T: Send>(
    parallelism: usize,
    seeds: &[u64],
    f: impl Fn(u64) -> T + Sync,
) -> Vec<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool");
    pool.install(|| {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| f(s)).collect()
    })
}

/// Merged statistics written by the `ensemble` subcommand.
pub struct EnsembleStats {
    pub trace_moments: Option<Vec<TraceMomentRow>>,
    pub delocalization: Option<(Vec<f64>, stats::KsReport)>,
    pub pair_correlation: Option<CorrelationHistogram>,
    pub events: Vec<EventSummary>,
}

pub fn reduce(outcomes: &[SeedOutcome]) -> RunResult<EnsembleStats> {
    let n_final = outcomes
        .first()
        .map(|o| o.trajectory.state.n())
        .unwrap_or(0);

    let angle_samples: Vec<Vec<f64>> = outcomes
        .iter()
        .map(|o| o.trajectory.state.angles().to_vec())
        .collect();

    let j_max = (n_final / 2).min(5);
    let trace_moments = if j_max >= 1 && outcomes.len() >= 2 {
        Some(stats::trace_moments(&angle_samples, j_max)?)
    } else {
        None
    };

    // squared first coordinate of the first eigenvector, across seeds
    let coord_samples: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o.trajectory.state.eigvecs() {
            Eigvecs::Full(f) => Some(f[(0, 0)].norm_sqr()),
            Eigvecs::Coords(slab) => Some(slab[(0, 0)].norm_sqr()),
            Eigvecs::None => None,
        })
        .collect();
    let delocalization = if coord_samples.len() >= 1000 {
        let report = stats::beta_delocalization_test(&coord_samples, n_final)?;
        Some((coord_samples, report))
    } else {
        None
    };

    let pair_correlation = if outcomes.len() >= 1000 {
        let samples: Vec<PointSample> = outcomes
            .iter()
            .map(|o| PointSample::from_angles(o.trajectory.state.angles(), o.seed))
            .collect();
        Some(stats::empirical_pair_correlation(&samples, 0.25, 4.0, 0.25)?)
    } else {
        None
    };

    let events = outcomes
        .iter()
        .map(|o| event_diagnostics(&o.trajectory.flags))
        .collect();

    Ok(EnsembleStats {
        trace_moments,
        delocalization,
        pair_correlation,
        events,
    })
}

/// Writes the merged reports under `dir`.
pub fn write_reports(
    dir: &Path,
    config: &RunConfig,
    ensemble: &EnsembleOutcome,
    stats: &EnsembleStats,
) -> RunResult<()> {
    std::fs::create_dir_all(dir)?;
    let meta = [
        ("config_hash", config.hash()),
        ("build_id", crate::build_id()),
        (
            "seeds",
            format!("{}..{}", config.seed, config.seed + config.ensemble as u64),
        ),
        ("n", config.n_max.to_string()),
    ];

    let summary: Vec<serde_json::Value> = ensemble
        .outcomes
        .iter()
        .map(|o| {
            let paths: Vec<_> = o
                .trajectory
                .paths
                .iter()
                .map(|p| {
                    json!({
                        "k": p.k,
                        "y_estimate": p.y_estimate(),
                        "abs_d": p.abs_d(),
                        "martingale": p.martingale(),
                    })
                })
                .collect();
            json!({
                "seed": o.seed,
                "n": o.trajectory.state.n(),
                "angles_digest": crate::angles_digest(o.trajectory.state.angles()),
                "paths": paths,
            })
        })
        .collect();
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&json!({
            "config": config,
            "config_hash": config.hash(),
            "build_id": crate::build_id(),
            "failures": ensemble.failures.iter().map(|(s, e)| json!({"seed": s, "error": e})).collect::<Vec<_>>(),
            "seeds": summary,
        }))?,
    )?;

    if let Some(rows) = &stats.trace_moments {
        write_csv(
            &dir.join("trace_moments.csv"),
            &meta,
            &["j", "mean", "sigma", "target"],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.j.to_string(),
                        fmt_f64(r.mean),
                        fmt_f64(r.sigma),
                        fmt_f64(r.target),
                    ]
                })
                .collect::<Vec<_>>(),
        )?;
    }

    if let Some((samples, ks)) = &stats.delocalization {
        let mut rows: Vec<Vec<String>> = samples.iter().map(|s| vec![fmt_f64(*s)]).collect();
        rows.insert(0, vec![format!("# ks_stat={} p={}", ks.statistic, ks.p_value)]);
        write_csv(
            &dir.join("delocalization.csv"),
            &meta,
            &["coord_sqr"],
            &rows,
        )?;
    }

    if let Some(hist) = &stats.pair_correlation {
        let centers = hist.centers();
        let rows: Vec<Vec<String>> = centers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    fmt_f64(*c),
                    fmt_f64(hist.density[i]),
                    fmt_f64(hist.sigma[i]),
                    fmt_f64(1.0 - cueflow::stats::kernel_sine(*c).powi(2)),
                    hist.counts[i].to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("pair_correlation.csv"),
            &meta,
            &["delta", "density", "sigma", "theory", "count"],
            &rows,
        )?;
    }

    let event_rows: Vec<Vec<String>> = ensemble
        .outcomes
        .iter()
        .zip(&stats.events)
        .map(|(o, e)| {
            vec![
                o.seed.to_string(),
                e.e1_violations.to_string(),
                e.e2_violations.to_string(),
                e.e3_min_violations.to_string(),
                e.e3_max_violations.to_string(),
                e.first_violation.map_or(String::new(), |n| n.to_string()),
            ]
        })
        .collect();
    write_csv(
        &dir.join("events.csv"),
        &meta,
        &["seed", "e1", "e2", "e3_min", "e3_max", "first_violation"],
        &event_rows,
    )?;
    Ok(())
}

/// Convenience used by the CLI: run, reduce, write, surface failures.
pub fn run_and_report(config: &RunConfig) -> RunResult<usize> {
    let ensemble = run_ensemble(config)?;
    let stats = reduce(&ensemble.outcomes)?;
    write_reports(&config.out_dir, config, &ensemble, &stats)?;
    if !ensemble.failures.is_empty() {
        for (seed, err) in &ensemble.failures {
            eprintln!("seed {seed} failed: {err}");
        }
        return Err(RunError::CheckpointMismatch(format!(
            "{} of {} seeds failed",
            ensemble.failures.len(),
            config.ensemble
        )));
    }
    Ok(ensemble.outcomes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;

    #[test]
    fn parallelism_does_not_change_merged_stats() {
        let base = RunConfig {
            seed: 3,
            mode: Mode::Coeff,
            n_max: 24,
            l_coords: 2,
            ensemble: 8,
            ..RunConfig::default()
        };
        let mut serial_cfg = base.clone();
        serial_cfg.parallelism = 1;
        let mut parallel_cfg = base.clone();
        parallel_cfg.parallelism = 8;

        let serial = run_ensemble(&serial_cfg).unwrap();
        let parallel = run_ensemble(&parallel_cfg).unwrap();
        assert_eq!(serial.outcomes.len(), parallel.outcomes.len());

        let s_stats = reduce(&serial.outcomes).unwrap();
        let p_stats = reduce(&parallel.outcomes).unwrap();
        let s_rows = s_stats.trace_moments.unwrap();
        let p_rows = p_stats.trace_moments.unwrap();
        for (a, b) in s_rows.iter().zip(&p_rows) {
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
        }
    }

    #[test]
    fn single_seed_reduces_to_one_trajectory() {
        let config = RunConfig {
            seed: 9,
            mode: Mode::Coeff,
            n_max: 16,
            l_coords: 1,
            ensemble: 1,
            ..RunConfig::default()
        };
        let ensemble = run_ensemble(&config).unwrap();
        assert_eq!(ensemble.outcomes.len(), 1);
        assert!(ensemble.failures.is_empty());
        let direct = run_trajectory(&config, None, None, false).unwrap();
        assert_eq!(
            crate::angles_digest(direct.state.angles()),
            crate::angles_digest(ensemble.outcomes[0].trajectory.state.angles())
        );
    }
}
