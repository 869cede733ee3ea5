//! End-to-end runs of the `kinlab` binary.

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const MINIMAL_RUN: &str = r#"{
  "schema_version": 1,
  "grid": {"n": 1, "x_period": 6.283185307179586, "v_halfwidth": 8.0, "nx": 8, "nv": 32, "t0": -0.5, "t1": 0.0, "nt": 2},
  "kernel": {"family": "homogeneous", "s": 0.3, "kappa": 2.0, "c": 1.0},
  "source": {"kind": "zero"},
  "initial": {"kind": "rough", "amplitude": 1.0, "modes": 8, "seed": 3},
  "stepper": "spectral-exponential",
  "dt": 0.05
}"#;

fn kinlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinlab")).args(args).env_remove("KINLAB_OUT").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_minimal_config_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", MINIMAL_RUN);
    let out = dir.path().join("out");
    let o = kinlab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trajectory.bin", "trajectory.json", "steps.csv", "run.json", "run.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let rep = read_json(&out.join("run.json"));
    assert_eq!(rep["config"]["kernel"]["s"], Value::from(0.3));
    assert_eq!(rep["config"]["source_r"], Value::from("inf"));
    assert_eq!(rep["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(rep["overall"], Value::from("pass"));
    let log = std::fs::read_to_string(out.join("steps.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 11);
}

#[test]
fn missing_kernel_block_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL_RUN.replace(r#""kernel": {"family": "homogeneous", "s": 0.3, "kappa": 2.0, "c": 1.0},"#, "");
    let cfg = write(dir.path(), "run.json", &text);
    let o = kinlab(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("kernel") && err.contains("line"), "{err}");
}

#[test]
fn same_seed_gives_same_content_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", MINIMAL_RUN);
    let hash = |tag: &str, seed: &str| {
        let out = dir.path().join(tag);
        let o = kinlab(&["run", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let rep = read_json(&out.join("run.json"));
        (rep["content_hash"].as_str().unwrap().to_string(), rep["config_hash"].as_str().unwrap().to_string())
    };
    let a = hash("a", "42");
    let b = hash("b", "42");
    let c = hash("c", "43");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    assert_ne!(a.1, c.1);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", MINIMAL_RUN);
    let o = Command::new(env!("CARGO_BIN_EXE_kinlab"))
        .args(["run", "--config", &cfg])
        .env("KINLAB_OUT", dir.path().join("root"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("root").join("run").join("run.json").exists());
}

#[test]
fn verify_cone_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinlab(&["verify", "--lemma", "A.2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let rep = read_json(&dir.path().join("lemma-A.2.json"));
    assert_eq!(rep["overall"], Value::from("pass"));
    assert_eq!(rep["lemma"], Value::from("A.2"));
    let csv = std::fs::read_to_string(dir.path().join("lemma-A.2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn verify_unknown_id_lists_valid_ids() {
    let o = kinlab(&["verify", "--lemma", "9.9"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for id in ["2.1", "2.2", "2.3", "3.1", "4.1", "5.1", "5.2", "A.1", "A.2", "A.3"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn verify_cutoffs_evaluates_five_properties() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinlab(&["verify", "--lemma", "2.3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rep = read_json(&dir.path().join("lemma-2.3.json"));
    let checks = rep["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 5);
    assert!(checks.iter().all(|c| c["verdict"] == Value::from("pass")));
    assert_eq!(rep["config"]["s"], Value::from(0.3));
}

#[test]
fn every_statement_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["2.1", "2.2", "3.1", "4.1", "5.1", "5.2", "A.1", "A.3"] {
        let o = kinlab(&["verify", "--lemma", id, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{id}: {}{}", stdout(&o), stderr(&o));
    }
}

#[test]
fn vacuous_report_has_distinct_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // A zero datum never reaches the upper level, so every hypothesis-bearing check is vacuous.
    let cfg = r#"{"run": {
        "grid": {"n": 1, "x_period": 16.0, "v_halfwidth": 8.0, "nx": 32, "nv": 64, "t0": -6.0, "t1": 0.0, "nt": 2},
        "kernel": {"family": "homogeneous", "s": 0.3, "kappa": 2.0, "c": 1.0},
        "source": {"kind": "zero"},
        "initial": {"kind": "zero"},
        "stepper": "spectral-exponential",
        "dt": 0.1}}"#;
    let path = write(dir.path(), "v.json", cfg);
    let o = kinlab(&["verify", "--lemma", "4.1", "--config", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn verify_config_typo_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.json", r#"{"samplez": 10}"#);
    let o = kinlab(&["verify", "--lemma", "A.2", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("samplez"));
}

#[test]
fn exponent_examples() {
    let o = kinlab(&["exponents", "--n", "1", "--s", "0.25", "--r", "60"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let value = |name: &str| -> f64 {
        text.lines().find(|l| l.starts_with(&format!("{name} "))).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(value("r0"), 30.0);
    assert!(value("recursion_gamma") > 1.0);
    assert!(!text.contains("flag: boundary"));

    let at_r0 = stdout(&kinlab(&["exponents", "--n", "1", "--s", "0.25", "--r", "30"]));
    assert!(at_r0.contains("flag: boundary: r equals the critical exponent"), "{at_r0}");

    let plane = stdout(&kinlab(&["exponents", "--n", "2", "--s", "0.5", "--r", "100"]));
    let p2: f64 = plane.lines().find(|l| l.starts_with("p2 ")).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((p2 - 4.0).abs() < 1e-9);

    let bad = kinlab(&["exponents", "--n", "1", "--s", "0.5", "--r", "30"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exponent_table_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinlab(&["exponents", "--n", "1", "--s", "0.25", "--r", "60", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rep = read_json(&dir.path().join("exponents.json"));
    assert_eq!(rep["table"]["r0"], Value::from(30.0));
    assert_eq!(rep["config"]["r"], Value::from(60.0));
}

#[test]
fn cone_random_instances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cone.json", r#"{"instances": 4, "resolution": 1000}"#);
    let out = dir.path().join("out");
    let o = kinlab(&["cone", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let mut rd = csv_rows(&out.join("instances.csv"));
    assert_eq!(rd.len(), 4);
    assert!(rd.iter_mut().all(|r| r.last().unwrap() == "true"));
    assert_eq!(read_json(&out.join("cone.json"))["config"]["seed"], Value::from(7));
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let base: Value = serde_json::from_str(MINIMAL_RUN).unwrap();
    let mut base = base.as_object().unwrap().clone();
    base.remove("schema_version");
    let cfg = serde_json::json!({ "schema_version": 1, "base": base, "orders": [0.2, 0.4], "seeds": [1, 2] });
    let path = write(dir.path(), "sweep.json", &cfg.to_string());
    let mut tables = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = kinlab(&["sweep", "--config", &path, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
        let rows = csv_rows(&out.join("jobs.csv"));
        assert_eq!(rows.len(), 4);
        tables.push(rows);
    }
    assert_eq!(tables[0], tables[1]);
    let hashes: std::collections::BTreeSet<&String> = tables[0].iter().map(|r| &r[9]).collect();
    assert_eq!(hashes.len(), 4);
}

#[test]
fn zero_workers_rejected() {
    let o = kinlab(&["sweep", "--config", "x.json", "--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
