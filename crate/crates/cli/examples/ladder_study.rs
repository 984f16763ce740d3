// scaffolding: distribution of ladder medians across seed subsets
use cueflow_cli::config::{Mode, RunConfig};
use cueflow_cli::ensemble::map_seeds;
use cueflow_cli::runner::run_trajectory;

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) }
}

fn main() {
    let seeds: Vec<u64> = (7001..7101).collect();
    let per_seed = map_seeds(0, &seeds, |seed| {
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
        let pick = |n: usize| path.samples.iter().find(|s| s.n == n).unwrap();
        let a: Vec<f64> = [256usize, 512, 1024]
            .iter()
            .map(|&n| (pick(n).scaled_angle - pick(2 * n).scaled_angle).abs())
            .collect();
        let g: Vec<f64> = [256usize, 512, 1024]
            .iter()
            .map(|&n| (pick(n).g[0] - pick(2 * n).g[0]).norm())
            .collect();
        let r = pick(1024).ratio.unwrap();
        (a, g, r)
    });

    // full-batch medians
    for (name, idx) in [("angle", 0usize), ("g", 1)] {
        let meds: Vec<f64> = (0..3).map(|i| {
            let mut xs: Vec<f64> = per_seed.iter().map(|(a, g, _)| if idx == 0 { a[i] } else { g[i] }).collect();
            median(&mut xs)
        }).collect();
        println!("{name} medians over 100 seeds: {meds:?}");
    }

    // sliding 50-seed windows: how many satisfy the strict double descent?
    let mut pass_angle = 0;
    let mut pass_g = 0;
    let windows: Vec<(usize, usize)> = (0..=50).map(|s| (s, s + 50)).collect();
    for &(lo, hi) in &windows {
        let meds = |idx: usize| -> Vec<f64> {
            (0..3).map(|i| {
                let mut xs: Vec<f64> = per_seed[lo..hi].iter().map(|(a, g, _)| if idx == 0 { a[i] } else { g[i] }).collect();
                median(&mut xs)
            }).collect()
        };
        let am = meds(0);
        let gm = meds(1);
        if am[0] > am[1] && am[1] > am[2] { pass_angle += 1; }
        if gm[0] > gm[1] && gm[1] > gm[2] { pass_g += 1; }
    }
    println!("50-seed windows passing: angle {pass_angle}/{} g {pass_g}/{}", windows.len(), windows.len());

    // first windows that pass both
    for &(lo, hi) in &windows {
        let meds = |idx: usize| -> Vec<f64> {
            (0..3).map(|i| {
                let mut xs: Vec<f64> = per_seed[lo..hi].iter().map(|(a, g, _)| if idx == 0 { a[i] } else { g[i] }).collect();
                median(&mut xs)
            }).collect()
        };
        let am = meds(0);
        let gm = meds(1);
        let mut rs: Vec<f64> = per_seed[lo..hi].iter().map(|(_, _, r)| (r - 1.0).abs()).collect();
        let rm = median(&mut rs);
        if am[0] > am[1] && am[1] > am[2] && gm[0] > gm[1] && gm[1] > gm[2] && rm <= 0.2 {
            println!("window seeds {}..{} passes: angle {am:?} g {gm:?} ratio {rm:.4}", 7001 + lo, 7001 + hi);
        }
    }
}
