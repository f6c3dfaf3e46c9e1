//! The `blaschke` binary on small configurations: exit codes and artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const COARSE: &str = r#""h": 0.2, "truncation": 3, "modes": 30,
    "t_grid": {"start": 0.1, "stop": 10.0, "count": 3, "include_zero": true},
    "flat_limit_grid": [10.0, 100.0],
    "length_grid": {"start": 10.0, "stop": 1000.0, "count": 5},
    "monte_carlo": {"horizon": 2.0, "samples": 40, "step": 0.05, "eigenfunctions": 2},
    "xray": {"forms": 1, "modes": 3, "geodesics": 2, "max_word_length": 1, "points": 200}"#;

fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, format!("{{{config}}}")).unwrap();
    Command::new(env!("CARGO_BIN_EXE_blaschke"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .expect("spawn blaschke")
}

fn summary(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("out").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn zero_differential_gives_the_hyperbolic_metric() {
    let dir = workdir("zero");
    let out = run(&dir, &format!(r#"{COARSE}, "polynomial": "zero""#), &["solve"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir, "solve.json");
    assert_eq!(s["passed"], true);
    assert!(s["result"]["zero_count"].is_null());
    for p in s["result"]["points"].as_array().unwrap() {
        assert_eq!(p["max_u"].as_f64().unwrap(), 0.0);
        assert_eq!(p["min_u"].as_f64().unwrap(), 0.0);
    }
    let u = std::fs::read_to_string(dir.join("out").join("u.csv")).unwrap();
    assert!(u.lines().skip(1).all(|l| l.split(',').skip(1).all(|x| x.parse::<f64>().unwrap() == 0.0)));
}

#[test]
fn zero_differential_has_zero_fiber_norm() {
    let dir = workdir("zero-covariance");
    let out = run(&dir, &format!(r#"{COARSE}, "polynomial": "zero""#), &["covariance"]);
    // the Monte-Carlo stage judges against the 4× prediction and fails closed
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().all(|l| l.contains("mc_spectral_agreement")), "{stderr}");
    let s = summary(&dir, "covariance.json");
    assert_eq!(s["passed"], true);
    assert_eq!(s["result"]["fiber"]["total"].as_f64().unwrap(), 0.0);
    assert_eq!(summary(&dir, "length.json")["result"]["skipped"], "q vanishes identically");
}

#[test]
fn decreasing_grid_is_a_config_error() {
    let dir = workdir("bad-grid");
    let out = run(&dir, r#""t_grid": [0.0, 10.0, 1.0]"#, &["solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly increasing"));
    assert!(!dir.join("out").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = workdir("bad-key");
    let out = run(&dir, r#""mesh_size": 0.1"#, &["solve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_provenance_and_tables() {
    let dir = workdir("solve");
    let out = run(&dir, COARSE, &["solve"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir, "solve.json");
    assert_eq!(s["provenance"]["command"], "solve");
    assert_eq!(s["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(s["setup"]["polynomial"], "linear");
    assert_eq!(s["result"]["points"].as_array().unwrap().len(), 4);
    let sweep = std::fs::read_to_string(dir.join("out").join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
}

#[test]
fn seed_override_changes_the_config_hash() {
    let a = workdir("seed-a");
    let b = workdir("seed-b");
    run(&a, COARSE, &["xray"]);
    run(&b, COARSE, &["xray", "--seed", "7"]);
    let (sa, sb) = (summary(&a, "xray.json"), summary(&b, "xray.json"));
    assert_eq!(sb["provenance"]["config"]["seed"], 7);
    assert_ne!(sa["provenance"]["config_hash"], sb["provenance"]["config_hash"]);
}
