//! End-to-end runs of the `twospeed` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_twospeed");

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const PARAMS: &str = r#"{
    "laws": {"first": {"kind": "gaussian", "variance": 1.0},
             "second": {"kind": "gaussian", "variance": 4.0}},
    "t": 0.5, "horizons": [100, 200], "replicates": 1, "master_seed": 1
}"#;

const SIMULATE: &str = r#"{
    "suite": "simulate",
    "laws": {"first": {"kind": "gaussian", "variance": 1.0},
             "second": {"kind": "gaussian", "variance": 1.44}},
    "t": 0.5, "horizons": [8, 12], "replicates": 300, "master_seed": 99,
    "pruning": {"kind": "window", "width": 6.0}
}"#;

#[test]
fn params_reports_fast_regime_and_mixed_tilt() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", PARAMS);
    let out = dir.path().join("run");
    let (code, stdout, stderr) = run(&["params", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["solver"]["regime"], "fast");
    let theta = manifest["solver"]["theta"].as_f64().unwrap();
    assert!((theta - (2.0 * 2f64.ln() / 2.5).sqrt()).abs() < 1e-9, "{theta}");
    let verdict = read_json(&out.join("verdict.json"));
    assert_eq!(verdict["overall"], "pass");
    let csv = std::fs::read_to_string(out.join("params.csv")).unwrap();
    assert!(csv.starts_with("n,t_n,m_n_theorem,m_n_generic\n100,50,"), "{csv}");
}

#[test]
fn thread_count_does_not_change_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SIMULATE);
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let (code, _, stderr) = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{stderr}");
        outputs.push(out);
    }
    for name in ["simulate.csv", "generations.csv"] {
        let a = std::fs::read(outputs[0].join(name)).unwrap();
        let b = std::fs::read(outputs[1].join(name)).unwrap();
        assert!(!a.is_empty());
        assert!(a == b, "{name} differs between thread counts");
    }
}

#[test]
fn manifest_reruns_reproduce_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SIMULATE);
    let first = dir.path().join("first");
    let (code, _, stderr) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let second = dir.path().join("second");
    let manifest = first.join("manifest.json");
    let (code, _, stderr) = run(&[
        "simulate",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(
        std::fs::read(first.join("simulate.csv")).unwrap(),
        std::fs::read(second.join("simulate.csv")).unwrap()
    );
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SIMULATE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "100", "--out", b.to_str().unwrap()]);
    assert_ne!(
        std::fs::read(a.join("simulate.csv")).unwrap(),
        std::fs::read(b.join("simulate.csv")).unwrap()
    );
    assert_eq!(read_json(&b.join("manifest.json"))["seeds"]["master_seed"], 100);
}

#[test]
fn empty_horizons_fail_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &PARAMS.replace("[100, 200]", "[]"));
    let (code, _, stderr) = run(&["params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("horizons"), "{stderr}");
}

#[test]
fn suite_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SIMULATE);
    let (code, _, stderr) = run(&["clt", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("suite"), "{stderr}");
}

#[test]
fn report_reads_back_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", PARAMS);
    let out = dir.path().join("run");
    run(&["params", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let (code, stdout, _) = run(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("PASS regime_classified"), "{stdout}");
}
