use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nodal"))
        .args(args)
        .env_remove("NODAL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn soliton_energy_lands_in_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nodal(&["solve", "--p", "2", "--dim", "1", "--q", "4", "--k", "0", "--rmax", "40", "--grid", "4000", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_report(dir.path());
    let c = report["solution"]["c_k"].as_f64().unwrap();
    assert!((0.657..=0.677).contains(&c), "c_0 = {c}");
    assert_eq!(report["solution"]["node_count_observed"], 0);
    assert_eq!(report["converged"], true);
    assert!(dir.path().join("profile.csv").exists());
    assert!(dir.path().join("profile.dat").exists());
}

#[test]
fn identical_flags_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["solve", "--q", "4", "--k", "1", "--rmax", "12", "--grid", "600", "--seed", "7", "--out", out];
    assert_eq!(nodal(&args).status.code(), Some(0));
    let first = read_report(dir.path());
    let first_csv = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert_eq!(nodal(&args).status.code(), Some(0));
    assert_eq!(without_timing(first), without_timing(read_report(dir.path())));
    assert_eq!(first_csv, fs::read_to_string(dir.path().join("profile.csv")).unwrap());
}

#[test]
fn collapse_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nodal(&["solve", "--p", "2", "--dim", "1", "--q", "4", "--k", "7", "--rmax", "10", "--grid", "40", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("collapsed"));
    let report = read_report(dir.path());
    assert_eq!(report["converged"], false);
    assert!(report["error"].as_str().unwrap().contains("collapsed"));
}

#[test]
fn supercritical_exponent_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nodal(&["solve", "--q", "7", "--p", "2", "--dim", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subcritical"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn malformed_flags_exit_one() {
    assert_eq!(nodal(&["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(nodal(&["solve", "--q", "4", "--lambda", "1", "--lambda", "2"]).status.code(), Some(1));
    assert_eq!(nodal(&["solve", "--q", "4", "--tol", "-1"]).status.code(), Some(1));
    assert_eq!(nodal(&["--help"]).status.code(), Some(0));
}

#[test]
fn output_directory_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_nodal"))
        .args(["solve", "--q", "4", "--rmax", "20", "--grid", "400"])
        .env("NODAL_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("report.json").exists());
}

#[test]
fn oracle_finds_soliton_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nodal(&["oracle", "--p", "2", "--dim", "1", "--q", "4", "--k", "0", "--amin", "1.3", "--amax", "1.5", "--rmax", "40", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_report(dir.path());
    let a = report["oracle"]["amplitude"].as_f64().unwrap();
    assert!((a - 2f64.sqrt()).abs() < 1e-6, "a* = {a}");

    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let amps: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(amps.len(), 41);
    assert!(amps.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn oracle_bracket_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let empty = nodal(&["oracle", "--q", "4", "--k", "0", "--amin", "1.3", "--amax", "1.3", "--out", out]);
    assert_eq!(empty.status.code(), Some(2));

    let o = nodal(&["oracle", "--q", "4", "--k", "0", "--amin", "1.5", "--amax", "1.6", "--samples", "5", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let report = read_report(dir.path());
    assert!(report["error"].as_str().unwrap().contains("does not straddle"));
    assert_eq!(report["sweep"].as_array().unwrap().len(), 5);
}

#[test]
fn check_reports_ar_exponent() {
    let o = nodal(&["check", "--p", "2", "--q", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("mu = 4"), "{text}");

    let o = nodal(&["check", "--p", "2", "--q", "3", "--q", "5"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("mu = 3"), "{text}");
    let sq = text.lines().find(|l| l.starts_with("SQ")).unwrap();
    assert!(sq.contains("yes"));
}

#[test]
fn spec_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    fs::write(&path, r#"{"p": 2.0, "dim": 3, "r_max": 20.0, "terms": [{"lambda": 1.0, "q": 4.0}]}"#).unwrap();
    let o = nodal(&["check", "--spec", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("p* = 6"));
}
