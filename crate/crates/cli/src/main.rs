//! Command-line entry point.
//!
//! Subcommands: `simulate` (one trajectory with checkpoints), `ensemble`
//! (seed-parallel runs with merged statistics), `stats` (closed-form tables),
//! `flow` (residual ladders), `verify` (the acceptance suite).
//!
//! Exit codes: 0 success, 1 run/acceptance failure, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cueflow_cli::config::{Mode, RunConfig};
use cueflow_cli::{acceptance, ensemble, flowcmd, runner, statscmd};

#[derive(Parser)]
#[command(name = "cueflow", version, about = "Coupled Haar-unitary towers: incremental spectra, eigenvector flows, and their statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Base RNG seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// MATRIX (dense tower + full eigenvectors, n <= 512) or COEFF.
    #[arg(long, default_value = "COEFF")]
    mode: String,
    /// Final dimension.
    #[arg(long, default_value_t = 64)]
    nmax: usize,
    /// Leading eigenvector coordinates to track (0 = angles only).
    #[arg(long, default_value_t = 8)]
    l: usize,
    /// Output directory (CUEFLOW_OUT overrides the default).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Secular solver angle tolerance.
    #[arg(long, default_value_t = cueflow::secular::DEFAULT_SECULAR_TOL)]
    tol: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory, writing JSONL rows and checkpoints.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Compare every step against the dense eigensolver (MATRIX mode).
        #[arg(long)]
        oracle: bool,
    },
    /// Run many seeds in parallel and write merged statistics.
    Ensemble {
        #[command(flatten)]
        common: CommonOpts,
        /// Number of seeds (seed, seed+1, ...).
        #[arg(long, default_value_t = 100)]
        size: usize,
    },
    /// Write closed-form reference tables (pair correlation, gap probabilities).
    Stats {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Flow-residual ladder against the final-dimension eigenvector.
    Flow {
        #[command(flatten)]
        common: CommonOpts,
        /// Flow exponents alpha (repeatable).
        #[arg(long, default_values_t = vec![0.0, 0.5])]
        alpha: Vec<f64>,
        /// Tracked indices k (repeatable).
        #[arg(long, default_values_t = vec![1i64])]
        k: Vec<i64>,
    },
    /// Run the verification suite and print one line per criterion.
    Verify {
        /// Restrict to the sub-5-minute subset.
        #[arg(long)]
        quick: bool,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
}

fn build_config(common: &CommonOpts) -> Result<RunConfig, String> {
    let mode = match common.mode.to_uppercase().as_str() {
        "MATRIX" => Mode::Matrix,
        "COEFF" => Mode::Coeff,
        other => return Err(format!("invalid mode {other:?} (expected MATRIX or COEFF)")),
    };
    let out_dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("CUEFLOW_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let config = RunConfig {
        seed: common.seed,
        mode,
        n_max: common.nmax,
        l_coords: common.l,
        secular_tol: common.tol,
        out_dir,
        parallelism: common.parallelism,
        ..RunConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn main() -> ExitCode {
    // the dense oracle is used under seed-level parallelism; keep BLAS serial
    std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Simulate {
            common,
            resume,
            oracle,
        } => {
            let config = match build_config(&common) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("configuration error: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let out = config.out_dir.clone();
            let traj = runner::run_trajectory(&config, Some(&out), resume.as_deref(), oracle)?;
            println!(
                "seed {} reached n = {} (digest {})",
                config.seed,
                traj.n(),
                cueflow_cli::angles_digest(traj.state.angles())
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Ensemble { common, size } => {
            let mut config = match build_config(&common) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("configuration error: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            config.ensemble = size;
            if let Err(e) = config.validate() {
                eprintln!("configuration error: {e}");
                return Ok(ExitCode::from(2));
            }
            let count = ensemble::run_and_report(&config)?;
            println!("{count} seeds merged into {}", config.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { common } => {
            let config = match build_config(&common) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("configuration error: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let meta = [
                ("config_hash", config.hash()),
                ("build_id", cueflow_cli::build_id()),
                ("n", config.n_max.to_string()),
            ];
            statscmd::write_theory_tables(&config.out_dir, config.n_max, &meta)?;
            let margin = statscmd::moving_average_sweep(100_000, 0.01, config.seed);
            println!(
                "theory tables written to {}; moving-average margin {margin:.4}",
                config.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Flow { common, alpha, k } => {
            let config = match build_config(&common) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("configuration error: {e}");
                    return Ok(ExitCode::from(2));
                }
            };
            let ladder: Vec<usize> = (6..=config.n_max.ilog2())
                .map(|p| 1usize << p)
                .filter(|&n| n <= config.n_max)
                .collect();
            let rows = flowcmd::flow_ladder(
                config.seed,
                &ladder,
                config.n_max,
                &k,
                &alpha,
                config.secular_tol,
            )?;
            let meta = [
                ("config_hash", config.hash()),
                ("build_id", cueflow_cli::build_id()),
                ("seed", config.seed.to_string()),
            ];
            let path = config.out_dir.join("flow_residuals.csv");
            flowcmd::write_flow_csv(&path, &rows, &meta)?;
            println!("{} rows written to {}", rows.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { quick, parallelism } => {
            let results = acceptance::run_all(quick, parallelism);
            let failed = results.iter().filter(|r| !r.pass).count();
            if failed == 0 {
                println!("all {} criteria passed", results.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("{failed} criteria FAILED");
                Ok(ExitCode::from(1))
            }
        }
    }
}
