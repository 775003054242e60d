//! End-to-end runs of the `rkvi` binary.

use std::path::Path;
use std::process::{Command, Output};

fn rkvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rkvi")).args(args).output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_writes_one_row_per_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let status = rkvi(&["simulate", "--problem", "sphere-pendulum", "--steps", "10", "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        [
            "step", "t", "q0", "q1", "q2", "v0", "v1", "v2", "energy", "g_norm",
            "J_vertical-rotation", "iterations", "residual"
        ]
    );
    assert_eq!(rows.len(), 11);
    let t: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(t[0], 0.0);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("run{i}.csv"));
            let o = rkvi(&["simulate", "--problem", "magnetic-sphere", "--h", "0.05", "--T", "0.5", "--out", out.to_str().unwrap()]);
            assert!(o.status.success());
            std::fs::read(&out).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn converge_recovers_fourth_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("order.csv");
    let o = rkvi(&["converge", "--problem", "sphere-pendulum", "--tableau", "rk4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["h", "steps", "error", "local_slope", "fitted_slope"]);
    assert_eq!(rows.len(), 4);
    let slope: f64 = rows[0][4].parse().unwrap();
    assert!((3.7..=4.3).contains(&slope), "slope {slope}");
}

#[test]
fn unbalanced_bias_is_rejected() {
    let o = rkvi(&["step", "--alpha-minus", "-0.3", "--alpha-plus", "0.8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha_minus/alpha_plus"));
}

#[test]
fn step_prints_a_toml_record() {
    let o = rkvi(&["step", "--problem", "circle", "--h", "0.1"]);
    assert!(o.status.success());
    let record: toml::Table = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(record["problem"].as_str(), Some("circle"));
    let q: Vec<f64> = record["q"].as_array().unwrap().iter().map(|x| x.as_float().unwrap()).collect();
    assert!((q[0] - 0.1f64.cos()).abs() < 1e-5 && (q[1] - 0.1f64.sin()).abs() < 1e-5);
    assert!(record["diagnostics"]["iterations"].as_integer().unwrap() >= 1);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("run.csv");
    std::fs::write(&cfg, "problem = \"circle\"\nh = 0.1\nsteps = 7\n").unwrap();
    let o = rkvi(&["simulate", "--config", cfg.to_str().unwrap(), "--steps", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    assert_eq!(header[2], "q0");
    assert_eq!(header.len(), 11);
    assert_eq!(rows.len(), 4);
}

#[test]
fn unknown_config_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "problem = \"circle\"\nstep_size = 0.1\n").unwrap();
    let o = rkvi(&["step", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step_size"));
}

#[test]
fn solver_failure_has_its_own_exit_code() {
    let o = rkvi(&["step", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn diagnose_reports_thresholds() {
    let o = rkvi(&["diagnose", "--problem", "circle", "--h", "0.05", "--steps", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    for check in ["symplecticity_defect", "del_residual", "momentum_drift_rotation", "time_reversal"] {
        let line = text.lines().find(|l| l.starts_with(check)).unwrap();
        assert!(line.ends_with("PASS") && line.split_whitespace().count() == 4, "{line}");
    }
}
