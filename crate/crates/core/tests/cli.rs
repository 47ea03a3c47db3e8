use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nlse-lab"));
    cmd.env_remove("NLSE_LAB_OUT");
    cmd
}

fn run_config(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    bin()
        .arg("run")
        .arg(&path)
        .args(["--out"])
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn list_is_alphabetical_and_stable() {
    let a = bin().arg("list").output().unwrap();
    let b = bin().arg("list").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names.len(), 11);
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert!(names.contains(&"soliton-gausson"));
}

#[test]
fn bare_invocation_prints_usage_and_catalog() {
    let out = bin().output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Usage"), "{text}");
    assert!(text.contains("wiener-scaling"), "{text}");
}

#[test]
fn tiny_grid_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), r#"{"experiment":"dispersion","grid":{"n":4}}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), r#"{"experiment":"evolve","run":{"dtt":0.1}}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_config(dir.path(), r#"{"experiment":"levitate"}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fractal_dispersion_run_reports_energies() {
    let dir = TempDir::new().unwrap();
    let out = run_config(
        dir.path(),
        r#"{"experiment":"dispersion","model":{"variant":"fractal","beta":0.1},"run":{"q":2}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let s = summary(dir.path());
    assert_eq!(s["status"], 0);
    let d = &s["results"]["dispersion"];
    for key in ["e_pred", "e_meas", "deviation"] {
        assert!(!d[key].is_null(), "missing {key}: {d}");
    }
    assert!(d["deviation"].as_f64().unwrap() < 1e-6);
    // k = 2·2π/16π, E = k²/2
    let csv = fs::read_to_string(dir.path().join("out/series.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[3] - 0.03125).abs() < 1e-15);
}

#[test]
fn kinematic_profile_series_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = run_config(
        dir.path(),
        r#"{"experiment":"soliton-kinematic","model":{"variant":"kinematic","a":1.0}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y,f,f_closed_form"));
    // (a, m, p, E) = (1, 1, 1, 0.5): κ = −1, c = 2, F = cos^{1/2}(√2 y).
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let arg = 2f64.sqrt() * v[0].abs();
        let exact = if arg < std::f64::consts::FRAC_PI_2 { arg.cos().sqrt() } else { 0.0 };
        assert!((v[1] - exact).abs() < 1e-6, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 256);
}

#[test]
fn reruns_are_byte_identical_apart_from_metadata() {
    let config = r#"{"experiment":"evolve","model":{"variant":"cubic-gp","g":0.5},
        "run":{"dt":0.001,"t_final":0.1,"record_every":50,"seed":9}}"#;
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(run_config(a.path(), config, &[]).status.code(), Some(0));
    assert_eq!(run_config(b.path(), config, &[]).status.code(), Some(0));
    let mut files: Vec<String> = fs::read_dir(a.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    files.sort();
    assert!(files.contains(&"series.csv".to_string()) && files.contains(&"field_t0.csv".to_string()), "{files:?}");
    for f in &files {
        assert_eq!(fs::read(a.path().join("out").join(f)).unwrap(), fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
    let (mut sa, mut sb) = (summary(a.path()), summary(b.path()));
    sa.as_object_mut().unwrap().remove("metadata");
    sb.as_object_mut().unwrap().remove("metadata");
    assert_eq!(sa, sb);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let out = run_config(
        dir.path(),
        r#"{"experiment":"wiener-scaling","run":{"n_samples":10000,"seed":1}}"#,
        &["--seed", "77"],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(dir.path())["parameters"]["run"]["seed"], 77);
}

#[test]
fn unstable_step_is_a_numerical_error() {
    let dir = TempDir::new().unwrap();
    let out = run_config(dir.path(), r#"{"experiment":"evolve","run":{"dt":0.5,"t_final":1.0}}"#, &[]);
    assert_eq!(out.status.code(), Some(3));
    let s = summary(dir.path());
    assert_eq!(s["status"], 3);
    assert!(s["error"].as_str().unwrap().contains("dt"), "{}", s["error"]);
}

#[test]
fn environment_variable_sets_default_output() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"experiment":"homogeneity","model":{"variant":"kinematic","a":0.5}}"#).unwrap();
    let target = dir.path().join("from-env");
    let out = bin()
        .args(["run", "--quiet"])
        .arg(&cfg)
        .env("NLSE_LAB_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("summary.json").exists());
}
