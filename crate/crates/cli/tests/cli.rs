use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const H1: &str = r#"{"kind": "step_two", "n": 2, "m": 1, "b": [[[0.0, 1.0], [-1.0, 0.0]]], "kappa": 16.0, "h_type": true}"#;

fn config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, format!(r#"{{"schema_version": 1, "space": {H1}, {body}}}"#)).unwrap();
    path
}

fn lab(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subelliptic-lab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn check_estimates_succeeds_on_heisenberg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#""p": 2, "seed": 3"#);
    let out = dir.path().join("out");
    let o = lab(&["run", "check-estimates"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("check_estimates.json"));
    let manifest = json(&out.join("check_estimates.manifest.json"));
    assert_eq!(report["manifest_hash"], manifest["manifest_hash"]);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["exponents"]["alpha"], 1.0);
    assert_eq!(report["exponents"]["r"], 1.0);
    assert_eq!(report["status"]["passed"], true);
    assert!(manifest["stages"].as_array().unwrap().len() >= 2);
    let csv = std::fs::read_to_string(out.join("check_estimates.csv")).unwrap();
    assert!(csv.starts_with("name,min,max,n,exclusion_radius\n"));
}

#[test]
fn out_of_range_q_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#""p": 4, "q": 3"#);
    let out = dir.path().join("out");
    let o = lab(&["run", "verify:ubound"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`q`") && err.contains("[1, 2]"), "{err}");
    assert!(!out.join("verify_ubound.json").exists());
    let o = lab(&["verify", "ubound"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_fields_and_commands_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#""p": 2, "budgets": {"n_sample": 10}"#);
    let o = lab(&["run", "sample"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budgets"));
    let cfg = config(dir.path(), r#""p": 2"#);
    let o = lab(&["run", "verify:poincare"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#""p": 3, "q": 1, "seed": 11, "budgets": {"n_samples": 20000}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = lab(&["run", "verify:hardy"], &cfg, out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["verify_hardy.json", "verify_hardy.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = lab(&["run", "verify:hardy", "--seed", "12"], &cfg, &b);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(
        std::fs::read(a.join("verify_hardy.json")).unwrap(),
        std::fs::read(b.join("verify_hardy.json")).unwrap()
    );
}

#[test]
fn failed_invariants_set_the_exit_code_and_the_report_collects_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#""p": 4, "q": 2, "spi": {"sigma_tolerance": 0.0, "t_grid": [2, 3, 4, 6]}"#);
    let out = dir.path().join("out");
    let o = lab(&["run", "spi-probe"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("spi_probe.json"));
    assert_eq!(report["status"]["passed"], false);
    assert!(report["result"]["fitted_sigma"].as_f64().unwrap() < 2.0);
    assert_eq!(lab(&["run", "spi-scan"], &cfg, &out).status.code(), Some(0));
    let o = lab(&["run", "report"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let summary = json(&out.join("report.json"));
    let rows = summary["result"]["reports"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(summary["status"]["failures"].as_array().unwrap().len(), 1);
}
