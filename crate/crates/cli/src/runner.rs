//! One trajectory: the dimension-step loop, milestone records, checkpoints,
//! and deterministic resume.
//!
//! Every random draw is keyed by `(seed, dimension step, purpose)`, so a
//! trajectory resumed from a checkpoint replays exactly the draws an
//! uninterrupted run would have made; the JSONL rows it emits are
//! bit-identical within one build.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use cueflow::eigenpath::EigenPath;
use cueflow::haar::{sample_sphere, sample_update_coeffs, MatrixTower, UpdateCoeffs};
use cueflow::oracle;
use cueflow::rng::{Purpose, RngStream};
use cueflow::secular::{
    advance_state, decompose_in_eigenbasis, solve_secular, SecularSolveReport, SpectralState,
    StateMode,
};
use cueflow::stats::{event_flags, EventFlags};

use crate::config::{Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] cueflow::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("oracle comparison failed at n = {n}: {what} = {value:e} (limit {limit:e})")]
    OracleFailure {
        n: usize,
        what: &'static str,
        value: f64,
        limit: f64,
    },
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// A live trajectory.
pub struct Trajectory {
    pub config: RunConfig,
    pub state: SpectralState,
    /// Explicit tower (MATRIX mode only).
    pub tower: Option<MatrixTower>,
    pub paths: Vec<EigenPath>,
    pub flags: Vec<EventFlags>,
    /// State before the most recent step.
    pub prev_state: Option<SpectralState>,
    pub last_coeffs: Option<UpdateCoeffs>,
    pub last_report: Option<SecularSolveReport>,
}

impl Trajectory {
    /// Initializes at dimension 1 (`u_1` a uniform unit scalar).
    pub fn new(config: RunConfig) -> RunResult<Self> {
        let mut rng = RngStream::for_step(config.seed, 1, Purpose::Sphere);
        let x1 = sample_sphere(1, &mut rng);
        let (mode, tower) = match config.mode {
            Mode::Matrix => {
                let mut tower = MatrixTower::new();
                tower.extend_with(&x1)?;
                (StateMode::Full, Some(tower))
            }
            Mode::Coeff if config.l_coords > 0 => (StateMode::Coords, None),
            Mode::Coeff => (StateMode::None, None),
        };
        let state = SpectralState::initial(x1.entries()[0], mode, config.l_coords)?;
        let paths = config.k_window.iter().map(|&k| EigenPath::new(k)).collect();
        Ok(Self {
            config,
            state,
            tower,
            paths,
            flags: Vec::new(),
            prev_state: None,
            last_coeffs: None,
            last_report: None,
        })
    }

    pub fn n(&self) -> usize {
        self.state.n()
    }

    /// One dimension step `n -> n+1`.
    pub fn step(&mut self) -> RunResult<()> {
        let n = self.state.n();
        let step_id = (n + 1) as u64;
        let coeffs = match self.config.mode {
            Mode::Matrix => {
                let mut rng = RngStream::for_step(self.config.seed, step_id, Purpose::Sphere);
                let x = sample_sphere(n + 1, &mut rng);
                let tower = self.tower.as_mut().expect("matrix mode has a tower");
                tower.extend_with(&x)?;
                decompose_in_eigenbasis(&x, &self.state)?
            }
            Mode::Coeff => {
                let mut rng = RngStream::for_step(self.config.seed, step_id, Purpose::Coeffs);
                sample_update_coeffs(n, &mut rng)?
            }
        };
        let report = solve_secular(&self.state, &coeffs, self.config.secular_tol)?;
        let next = advance_state(&self.state, &coeffs, &report, self.config.l_coords)?;

        for path in &mut self.paths {
            path.advance(&self.state, &next, &coeffs, &report)?;
        }
        let max_mu = coeffs.mu.iter().map(|m| m.norm()).fold(0.0f64, f64::max);
        self.flags.push(event_flags(
            next.angles(),
            max_mu,
            coeffs.nu.norm(),
            self.config.epsilon,
        ));

        self.prev_state = Some(std::mem::replace(&mut self.state, next));
        self.last_coeffs = Some(coeffs);
        self.last_report = Some(report);
        Ok(())
    }

    /// Steps until dimension `n`, recording milestone samples on the paths.
    pub fn advance_to(&mut self, n: usize) -> RunResult<()> {
        while self.state.n() < n {
            self.step()?;
            if is_milestone(self.state.n(), self.config.n_max) {
                self.snapshot_paths()?;
            }
        }
        Ok(())
    }

    /// Pushes a sample for every tracked path that resolves at the current n.
    pub fn snapshot_paths(&mut self) -> RunResult<()> {
        for path in &mut self.paths {
            if self.state.n() >= path.start_dim() {
                let sample = path.snapshot(&self.state, self.config.l_coords.max(1))?;
                path.push_sample(sample);
            }
        }
        Ok(())
    }

    /// Dense-oracle comparison of the current state (MATRIX mode).
    pub fn oracle_check(&self) -> RunResult<()> {
        let tower = self.tower.as_ref().expect("oracle needs MATRIX mode");
        let n = self.state.n();
        let cmp = oracle::compare_with_dense(&self.state, tower.matrix())?;
        if cmp.max_angle_dev > 1e-9 {
            return Err(RunError::OracleFailure {
                n,
                what: "angle deviation",
                value: cmp.max_angle_dev,
                limit: 1e-9,
            });
        }
        if let Some(dev) = cmp.max_coord_dev {
            if dev > 1e-7 {
                return Err(RunError::OracleFailure {
                    n,
                    what: "eigenvector coordinate deviation",
                    value: dev,
                    limit: 1e-7,
                });
            }
        }
        if n >= 2 {
            let prev = tower.level(n - 1);
            let sigma2 = oracle::rank_one_defect(&prev, tower.matrix())?;
            if sigma2 > 1e-10 {
                return Err(RunError::OracleFailure {
                    n,
                    what: "rank-one defect sigma_2",
                    value: sigma2,
                    limit: 1e-10,
                });
            }
        }
        Ok(())
    }

    /// The JSONL record row for the current dimension.
    pub fn record_row(&self) -> serde_json::Value {
        let paths: Vec<serde_json::Value> = self
            .paths
            .iter()
            .filter(|p| self.state.n() >= p.start_dim())
            .map(|p| {
                let sample = p.samples.last();
                json!({
                    "k": p.k,
                    "scaled_angle": sample.map(|s| s.scaled_angle),
                    "abs_d": sample.map(|s| s.abs_d),
                    "ratio": sample.and_then(|s| s.ratio),
                    "martingale": sample.map(|s| s.martingale),
                    "g": sample.map(|s| s.g.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()),
                })
            })
            .collect();
        let events = self.flags.last().map(|f| {
            json!({
                "e1": f.e1_ok, "e2": f.e2_ok,
                "e3_min": f.e3_min_ok, "e3_max": f.e3_max_ok,
                "min_gap": f.min_gap, "max_gap": f.max_gap,
            })
        });
        json!({
            "n": self.state.n(),
            "angles_digest": crate::angles_digest(self.state.angles()),
            "paths": paths,
            "events": events,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.config.hash(),
            build_id: crate::build_id(),
            n: self.state.n(),
            angles_digest: crate::angles_digest(self.state.angles()),
            state: self.state.clone(),
            tower: self.tower.clone(),
            paths: self.paths.clone(),
            flags: self.flags.clone(),
        }
    }

    pub fn from_checkpoint(config: RunConfig, cp: Checkpoint) -> RunResult<Self> {
        if cp.config_hash != config.hash() {
            return Err(RunError::CheckpointMismatch(format!(
                "config hash {} does not match checkpoint {}",
                config.hash(),
                cp.config_hash
            )));
        }
        if cp.angles_digest != crate::angles_digest(cp.state.angles()) {
            return Err(RunError::CheckpointMismatch(
                "angle digest does not match serialized state".into(),
            ));
        }
        Ok(Self {
            config,
            state: cp.state,
            tower: cp.tower,
            paths: cp.paths,
            flags: cp.flags,
            prev_state: None,
            last_coeffs: None,
            last_report: None,
        })
    }
}

/// Serialized resume point. JSON float round-tripping is exact, so resumed
/// runs continue bit-for-bit.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub build_id: String,
    pub n: usize,
    pub angles_digest: String,
    pub state: SpectralState,
    pub tower: Option<MatrixTower>,
    pub paths: Vec<EigenPath>,
    pub flags: Vec<EventFlags>,
}

/// Milestones: powers of two and the final dimension.
pub fn is_milestone(n: usize, n_max: usize) -> bool {
    n == n_max || (n >= 2 && n.is_power_of_two()) || n == 1
}

/// Runs a trajectory to `n_max`, writing JSONL rows and checkpoints at
/// milestones. Returns the finished trajectory.
pub fn run_trajectory(
    config: &RunConfig,
    out_dir: Option<&Path>,
    resume_from: Option<&Path>,
    oracle_every_step: bool,
) -> RunResult<Trajectory> {
    let mut traj = match resume_from {
        Some(path) => {
            let cp: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
            Trajectory::from_checkpoint(config.clone(), cp)?
        }
        None => Trajectory::new(config.clone())?,
    };

    let mut rows: Vec<serde_json::Value> = Vec::new();
    let mut record = |t: &mut Trajectory| -> RunResult<()> {
        t.snapshot_paths()?;
        rows.push(t.record_row());
        Ok(())
    };

    if traj.n() == 1 && resume_from.is_none() {
        record(&mut traj)?;
    }
    while traj.n() < config.n_max {
        traj.step()?;
        if oracle_every_step {
            traj.oracle_check()?;
        }
        if is_milestone(traj.n(), config.n_max) {
            record(&mut traj)?;
            if let Some(dir) = out_dir {
                let ck_dir = dir.join("checkpoints");
                fs::create_dir_all(&ck_dir)?;
                let path = ck_dir.join(format!("ckpt_{:06}.json", traj.n()));
                fs::write(&path, serde_json::to_string(&traj.checkpoint())?)?;
            }
        }
    }

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&json!({
                "config": &config,
                "config_hash": config.hash(),
                "meta": config.meta(),
            }))?,
        )?;
        let mut f = fs::File::create(dir.join("trajectory.jsonl"))?;
        for row in &rows {
            writeln!(f, "{row}")?;
        }
    }
    Ok(traj)
}
