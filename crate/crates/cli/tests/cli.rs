use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tsfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsfd")).args(args).output().unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn fixture_writes_problem_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "fig1.json");
    let o = tsfd(&["fixture", "--name", "fig1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let problem = read_json(&out);
    assert_eq!(problem["items"].as_array().unwrap().len(), 18);
    let sidecar = read_json(&path(&dir, "fig1.expected.json"));
    assert_eq!(sidecar["name"], "fig1");
    assert!(!sidecar["expected"].as_array().unwrap().is_empty());
}

#[test]
fn unknown_fixture_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let o = tsfd(&["fixture", "--name", "nope", "--out", s(&path(&dir, "x.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rank_then_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    let problem = path(&dir, "ex2.json");
    let policy = path(&dir, "policy.json");
    let report = path(&dir, "report.json");
    assert!(tsfd(&["fixture", "--name", "ex2", "--out", s(&problem)]).status.success());
    let o = tsfd(&["rank", "--method", "userfair", "--problem", s(&problem), "--out", s(&policy), "--f", "log:0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pol = read_json(&policy);
    let weights: Vec<f64> = pol["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).collect();
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let o = tsfd(&["evaluate", "--problem", s(&problem), "--policy", s(&policy), "--out", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&report);
    let utility = r["utility"].as_f64().unwrap();
    // Each item at each rank half the time: 0.5 * (1 + 0.5) * (0.5 * 1 + 0.5 * 0.9).
    assert!((utility - 0.7125).abs() < 1e-4, "utility {utility}");
    assert!(r["diversity"].as_f64().unwrap() <= r["diversity_ub"].as_f64().unwrap() + 1e-9);
}

#[test]
fn degenerate_problem_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let problem = path(&dir, "bad.json");
    assert!(tsfd(&["fixture", "--name", "ex2", "--out", s(&problem)]).status.success());
    let mut p = read_json(&problem);
    p["relevance"] = serde_json::json!([[0.0, 0.0], [0.0, 0.9]]);
    fs::write(&problem, p.to_string()).unwrap();
    let o = tsfd(&["rank", "--problem", s(&problem), "--out", s(&path(&dir, "p.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_policy_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let problem = path(&dir, "ex2.json");
    let policy = path(&dir, "policy.json");
    assert!(tsfd(&["fixture", "--name", "ex2", "--out", s(&problem)]).status.success());
    fs::write(&policy, r#"{"rankings": [["d1", "d1"]], "weights": [1.0]}"#).unwrap();
    let o = tsfd(&["evaluate", "--problem", s(&problem), "--policy", s(&policy)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dataset_generation_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    for out in [&a, &b] {
        let o = tsfd(&["generate-dataset", "--seed", "3", "--sample", "2", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn table_is_deterministic_and_plots() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    for out in [&a, &b] {
        let o = tsfd(&["table", "--samples", "4", "--seed", "11", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("method,samples,failed,unconverged,bound_violations"));
    assert_eq!(rows.len(), 6);
    let svg = path(&dir, "t.svg");
    let o = tsfd(&["plot", "--csv", s(&a), "--kind", "bars", "--out", s(&svg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));
}

#[test]
fn sweep_writes_one_row_per_value_and_method() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s.csv");
    let o = tsfd(&[
        "sweep", "--axis", "s", "--values", "0,1", "--samples", "3", "--methods", "tsfd,userfair", "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5);
    let svg = path(&dir, "s.svg");
    assert!(tsfd(&["plot", "--csv", s(&out), "--out", s(&svg)]).status.success());
}

#[test]
fn empty_plot_input_is_rejected() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "e.csv");
    fs::write(&csv, "").unwrap();
    let o = tsfd(&["plot", "--csv", s(&csv), "--out", s(&path(&dir, "e.svg"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "c.json");
    fs::write(&cfg, r#"{"samples": 0}"#).unwrap();
    let o = tsfd(&["table", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, r#"{"unknown_field": 1}"#).unwrap();
    let o = tsfd(&["table", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}
