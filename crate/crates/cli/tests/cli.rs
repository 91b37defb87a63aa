use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adapt")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

/// Deterministic data: signal below x = 0.3.
fn write_input(dir: &Path, n: usize) -> PathBuf {
    let mut text = String::from("x,p,label\n");
    let mut state = 12345u64;
    let mut unif = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    for i in 0..n {
        let x = i as f64 / n as f64;
        let u = unif();
        let p = if x < 0.3 && unif() < 0.8 { u.powi(8) } else { u };
        text.push_str(&format!("{x},{p},{}\n", i % 3));
    }
    let path = dir.join("input.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "alpha = [0.1, 0.2]\n[columns]\np = \"p\"\ncovariates = [\"x\"]\n[adapt]\nfamily = \"beta\"\ncandidates = [{ pi = { kind = \"natural_spline\", knots = 3 }, mu = { kind = \"natural_spline\", knots = 3 } }, { pi = { kind = \"intercept\" }, mu = { kind = \"intercept\" } }]\n",
    )
    .unwrap();
    path
}

#[test]
fn run_writes_results_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), 300);
    let cfg = write_config(dir.path());
    let out = dir.path().join("out.csv");
    let diag = dir.path().join("diag.json");
    let res = adapt(&[
        "run",
        input.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--diagnostics",
        diag.to_str().unwrap(),
        "--info-loss",
        "--threads",
        "1",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("#schema=1"));
    assert_eq!(lines.next(), Some("index,x,p,q_value,rejected@0.1,rejected@0.2,lfdr_final"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 300);
    let mut rejected = 0;
    for r in &rows {
        let q: f64 = r[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&q));
        assert_eq!(r[4] == "1", q <= 0.1);
        assert_eq!(r[5] == "1", q <= 0.2);
        assert!(r[4] == "0" || r[5] == "1");
        let lfdr: f64 = r[6].parse().unwrap();
        assert!((0.0..=1.0).contains(&lfdr));
        rejected += usize::from(r[5] == "1");
    }
    assert!(rejected > 10, "{rejected}");
    let d: serde_json::Value = serde_json::from_slice(&std::fs::read(&diag).unwrap()).unwrap();
    assert_eq!(d["schema"], 1);
    assert!(!d["trace"]["steps"].as_array().unwrap().is_empty());
    assert_eq!(d["selection"].as_array().unwrap().len(), 2);
    assert_eq!(d["thresholds"].as_array().unwrap().len(), 300);
    assert_eq!(d["info_loss"].as_array().unwrap().len(), 2);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), 200);
    let cfg = write_config(dir.path());
    let out = dir.path().join("out.csv");
    let res = adapt(&[
        "run",
        input.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--alpha",
        "0.05",
        "--featurization",
        "intercept",
        "--family",
        "gaussian",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with("q_value,rejected@0.05,lfdr_final"));
}

#[test]
fn default_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.toml");
    assert_eq!(code(&adapt(&["config", "-o", path.to_str().unwrap()])), 0);
    let printed = adapt(&["config"]);
    assert_eq!(String::from_utf8(printed.stdout).unwrap(), std::fs::read_to_string(&path).unwrap());
    let input = write_input(dir.path(), 150);
    let out = dir.path().join("o.csv");
    let res = adapt(&["run", input.to_str().unwrap(), "-c", path.to_str().unwrap(), "--featurization", "intercept", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Usage errors.
    assert_eq!(code(&adapt(&["run"])), 1);
    assert_eq!(code(&adapt(&["frobnicate"])), 1);
    let input = write_input(dir.path(), 50);
    let i = input.to_str().unwrap();
    assert_eq!(code(&adapt(&["run", i, "--alpha", "1.5"])), 1);
    assert_eq!(code(&adapt(&["run", i, "--featurization", "radial:2"])), 1);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "nonsense = true\n").unwrap();
    assert_eq!(code(&adapt(&["run", i, "-c", bad.to_str().unwrap()])), 1);
    assert_eq!(code(&adapt(&["simulate", "--scenario", "nowhere"])), 1);
    // Data errors.
    assert_eq!(code(&adapt(&["run", "/nonexistent.csv"])), 2);
    let nop = dir.path().join("nop.csv");
    std::fs::write(&nop, "x,q\n1,0.5\n").unwrap();
    let res = adapt(&["run", nop.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("no column `p`"));
    let range = dir.path().join("range.csv");
    std::fs::write(&range, "x,p\n1,0.5\n2,7\n").unwrap();
    assert_eq!(code(&adapt(&["run", range.to_str().unwrap()])), 2);
    // Help is not an error.
    assert_eq!(code(&adapt(&["--help"])), 0);
}

#[test]
fn baselines_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), 200);
    let out = dir.path().join("b.csv");
    let res = adapt(&["baselines", input.to_str().unwrap(), "--alpha", "0.1", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().nth(1), Some("index,x,label,p,bh@0.1,storey@0.1,bc@0.1"));
    assert_eq!(text.lines().count(), 202);
}

#[test]
fn simulate_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let report = dir.path().join("sim.json");
    let res = adapt(&[
        "simulate",
        "--scenario",
        "example1-null",
        "--reps",
        "3",
        "--methods",
        "bh,bc",
        "--alpha",
        "0.1",
        "-o",
        out.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("method,alpha,reps,mean_fdp,se_fdp,mean_power,se_power"));
    assert!(lines.next().unwrap().starts_with("bh,0.1,3,"));
    assert!(lines.next().unwrap().starts_with("bc,0.1,3,"));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("#schema=1\n"));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["outcomes"].as_array().unwrap().len(), 6);
}

#[test]
fn replay_reports_final_state() {
    let dir = tempfile::tempdir().unwrap();
    let n = 80;
    let pvalues: Vec<f64> = (0..n).map(|i| ((i * 29 % n) as f64 + 0.5) / n as f64).collect();
    let covariates: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let log = serde_json::json!({
        "schema": 1,
        "data": {"pvalues": pvalues, "covariates": covariates},
        "config": {"candidates": [{"pi": {"kind": "intercept"}, "mu": {"kind": "intercept"}}]},
        "actions": [{"type": "step", "k": 3}, {"type": "set_family", "family": "nope"}, {"type": "finalize"}]
    });
    let path = dir.path().join("log.json");
    std::fs::write(&path, log.to_string()).unwrap();
    let res = adapt(&["replay", path.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let out: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(out["finalized"], true);
    assert_eq!(out["failed"][0]["position"], 1);
    assert_eq!(out["result"]["qvalues"].as_array().unwrap().len(), n);
    std::fs::write(&path, "{}").unwrap();
    assert_eq!(code(&adapt(&["replay", path.to_str().unwrap()])), 2);
}
