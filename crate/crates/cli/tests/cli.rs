//! End-to-end CLI checks: exit codes, negative controls, resume behavior.

use std::process::Command;

fn cueflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cueflow"))
}

#[test]
fn configuration_errors_exit_2() {
    let out = cueflow()
        .args(["simulate", "--mode", "MATRIX", "--nmax", "1024"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = cueflow()
        .args(["simulate", "--mode", "SIDEWAYS", "--nmax", "8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = cueflow()
            .args([
                "simulate", "--seed", "5", "--mode", "COEFF", "--nmax", "64", "--l", "2",
                "--out",
            ])
            .arg(dir.path().join(sub))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(dir.path().join(sub).join("trajectory.jsonl")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b, "trajectory rows must be bit-identical");
    assert!(dir.path().join("a/meta.json").exists());
    assert!(dir.path().join("a/checkpoints/ckpt_000032.json").exists());
}

#[test]
fn resumed_run_reproduces_uninterrupted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let full_dir = dir.path().join("full");
    let out = cueflow()
        .args(["simulate", "--seed", "9", "--nmax", "128", "--l", "1", "--out"])
        .arg(&full_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let full_rows = std::fs::read_to_string(full_dir.join("trajectory.jsonl")).unwrap();
    let last_full = full_rows.lines().last().unwrap().to_string();

    let resumed_dir = dir.path().join("resumed");
    let out = cueflow()
        .args(["simulate", "--seed", "9", "--nmax", "128", "--l", "1", "--out"])
        .arg(&resumed_dir)
        .arg("--resume")
        .arg(full_dir.join("checkpoints/ckpt_000064.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resumed_rows = std::fs::read_to_string(resumed_dir.join("trajectory.jsonl")).unwrap();
    let last_resumed = resumed_rows.lines().last().unwrap().to_string();
    assert_eq!(last_full, last_resumed, "resume must continue bit-for-bit");
}

#[test]
fn tampered_tolerance_fails_oracle() {
    // negative control: a 1e-2 secular tolerance must be caught by --oracle
    let out = cueflow()
        .args([
            "simulate", "--seed", "3", "--mode", "MATRIX", "--nmax", "24", "--tol", "1e-2",
            "--oracle", "--out",
        ])
        .arg(tempfile::tempdir().unwrap().path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "expected oracle failure");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("oracle"), "stderr: {stderr}");
}

#[test]
fn stats_and_flow_commands_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = cueflow()
        .args(["stats", "--nmax", "12", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("gap_probability.csv").exists());
    assert!(dir.path().join("rho2_theory.csv").exists());

    let out = cueflow()
        .args(["flow", "--seed", "2", "--mode", "MATRIX", "--nmax", "128", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("flow_residuals.csv")).unwrap();
    assert!(table.lines().next().unwrap().starts_with('#'));
    assert!(table.contains("n,k,alpha,residual,normalized_residual"));
}
