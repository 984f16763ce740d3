//! Orchestration around the core library: reproducible trajectories,
//! seed-parallel ensembles, statistics exports, flow-residual tables, and the
//! verification suite the `verify` subcommand and the acceptance tests share.

pub mod acceptance;
pub mod config;
pub mod ensemble;
pub mod flowcmd;
pub mod report;
pub mod runner;
pub mod statscmd;

pub use config::{ConfigError, Mode, RunConfig};
pub use runner::{run_trajectory, Trajectory};

/// Build identifier embedded in outputs.
pub fn build_id() -> String {
    format!("cueflow-{}", env!("CARGO_PKG_VERSION"))
}

/// FNV-1a 64-bit hash, used for config hashes and angle digests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Digest of an angle list (bit patterns, order-sensitive).
pub fn angles_digest(angles: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(angles.len() * 8);
    for a in angles {
        bytes.extend_from_slice(&a.to_bits().to_le_bytes());
    }
    format!("{:016x}", fnv1a(&bytes))
}
