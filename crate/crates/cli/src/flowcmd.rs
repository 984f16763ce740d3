//! Flow-residual ladders: how well matrix powers `u_n^{floor(alpha n)}`
//! approximate the diagonal flow on a renormalized eigenvector, measured at a
//! geometric ladder of dimensions against the final dimension's coordinates.

use std::path::Path;

use cueflow::eigenpath::EigenPath;
use cueflow::flow::{flow_residual, FlowVariant};
use cueflow::haar::sample_update_coeffs;
use cueflow::rng::{Purpose, RngStream};
use cueflow::secular::{advance_state, solve_secular, SpectralState, StateMode};
use cueflow::C64;

use crate::report::{fmt_f64, write_csv};
use crate::runner::RunResult;

#[derive(Debug, Clone)]
pub struct FlowRow {
    pub seed: u64,
    pub n: usize,
    pub k: i64,
    pub alpha: f64,
    pub residual: f64,
    pub normalized_residual: f64,
}

/// Runs one full-eigenvector trajectory to `n_max`, keeping state clones at
/// the ladder dimensions; the proxy for the limiting eigenvector is the
/// renormalized eigenvector at `n_max`, and residuals at each ladder point use
/// its leading coordinates.
pub fn flow_ladder(
    seed: u64,
    ladder: &[usize],
    n_max: usize,
    ks: &[i64],
    alphas: &[f64],
    tol: f64,
) -> RunResult<Vec<FlowRow>> {
    let mut rng = RngStream::for_step(seed, 1, Purpose::Sphere);
    let x1 = cueflow::haar::sample_sphere(1, &mut rng);
    let mut state = SpectralState::initial(x1.entries()[0], StateMode::Full, 0)?;
    let mut paths: Vec<EigenPath> = ks.iter().map(|&k| EigenPath::new(k)).collect();
    let mut snapshots: Vec<(usize, SpectralState)> = Vec::new();
    let mut path_d_at: Vec<Vec<(usize, C64)>> = vec![Vec::new(); ks.len()];

    while state.n() < n_max {
        let step_id = (state.n() + 1) as u64;
        let mut stream = RngStream::for_step(seed, step_id, Purpose::Coeffs);
        let coeffs = sample_update_coeffs(state.n(), &mut stream)?;
        let report = solve_secular(&state, &coeffs, tol)?;
        let next = advance_state(&state, &coeffs, &report, 0)?;
        for path in paths.iter_mut() {
            path.advance(&state, &next, &coeffs, &report)?;
        }
        state = next;
        if ladder.contains(&state.n()) && state.n() < n_max {
            snapshots.push((state.n(), state.clone()));
            for (pi, path) in paths.iter().enumerate() {
                path_d_at[pi].push((state.n(), path.d()));
            }
        }
    }
    snapshots.push((state.n(), state.clone()));
    for (pi, path) in paths.iter().enumerate() {
        path_d_at[pi].push((state.n(), path.d()));
    }

    // proxy limit: g_k at n_max, in standard coordinates
    let f_final = state.full_matrix()?;
    let mut rows = Vec::new();
    for (pi, path) in paths.iter().enumerate() {
        let (idx, _) = state.resolve_index(path.k)?;
        let d_final = path.d();
        let g_full: Vec<C64> = (0..state.n()).map(|l| d_final * f_final[(l, idx - 1)]).collect();
        for (n, snap) in &snapshots {
            let prefix = &g_full[..*n];
            let norm = prefix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for &alpha in alphas {
                let abs = flow_residual(snap, prefix, path.k, alpha, FlowVariant::Absolute)?;
                rows.push(FlowRow {
                    seed,
                    n: *n,
                    k: path.k,
                    alpha,
                    residual: abs,
                    normalized_residual: abs / norm,
                });
            }
        }
        let _ = &path_d_at[pi];
    }
    Ok(rows)
}

/// Writes the residual table CSV.
pub fn write_flow_csv(path: &Path, rows: &[FlowRow], meta: &[(&str, String)]) -> RunResult<()> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.k.to_string(),
                fmt_f64(r.alpha),
                fmt_f64(r.residual),
                fmt_f64(r.normalized_residual),
            ]
        })
        .collect();
    write_csv(
        path,
        meta,
        &["n", "k", "alpha", "residual", "normalized_residual"],
        &records,
    )
}
