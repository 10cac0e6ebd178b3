use std::path::Path;
use std::process::Command;

use qbsde::harness::{
    emit_report, load_config, parse_config, run_experiment, run_in_memory, Format, Registry, RunRecord, SUMMARY,
};
use qbsde::Error;

fn shipped(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

fn parse(text: &str) -> qbsde::harness::ExperimentConfig {
    parse_config(text, &Registry::builtin()).unwrap()
}

#[test]
fn every_shipped_config_validates() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 10);
}

#[test]
fn zero_data_yields_zero_solution_and_passes() {
    let out = run_in_memory(&load_config(shipped("zero-data")).unwrap(), &Registry::builtin()).unwrap();
    let s = &out.solutions["lsmc"];
    assert!(s.y_tensor().iter().all(|v| *v == 0.0));
    assert!(s.z_tensor().iter().all(|v| *v == 0.0));
    assert!(out.record.complete());
    assert!(out.record.pass());
}

#[test]
fn failing_solver_is_recorded_and_others_continue() {
    let cfg = parse(
        r#"{"sampling": {"paths": 200, "seed": 3},
            "generator": {"g": {"name": "nonconvex"}, "constants": {"k_y": 0, "k_z": 3}},
            "solvers": [{"id": "ch", "method": "cole_hopf"}, {"id": "lsmc", "method": "lsmc"}],
            "diagnostics": {"uniqueness": [{"a": "ch", "b": "lsmc"}], "exp_moment": [{"solver": "lsmc", "q": 1}]}}"#,
    );
    let out = run_in_memory(&cfg, &Registry::builtin()).unwrap();
    let failed = out.record.failed_stages();
    assert_eq!(failed, vec!["solve:ch".to_string(), "diag:uniqueness[0]:ch~lsmc".to_string()]);
    assert!(out.solutions.contains_key("lsmc"));
    assert_eq!(out.record.summary.diagnostics.exp_moment.len(), 1);
    assert!(!out.record.pass());
    let dir = tempfile::tempdir().unwrap();
    match emit_report(&out.record, Format::Json, dir.path()) {
        Err(Error::ReportIncomplete { missing }) => assert_eq!(missing, failed),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_record_is_incomplete() {
    let cfg = parse(r#"{"sampling": {"paths": 10, "seed": 1}}"#);
    let mut out = run_in_memory(&cfg, &Registry::builtin()).unwrap();
    out.record.stages.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        emit_report(&out.record, Format::Csv, dir.path()),
        Err(Error::ReportIncomplete { .. })
    ));
}

#[test]
fn report_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(
        r#"{"sampling": {"paths": 500, "seed": 5},
            "generator": {"h": {"name": "tanh_state"}},
            "solvers": [{"id": "a", "method": "lsmc"}, {"id": "b", "method": "linear"}],
            "diagnostics": {"z_growth": [{"solver": "a", "r": 0.0}], "uniqueness": [{"a": "a", "b": "b"}]}}"#,
    );
    let out = run_experiment(&cfg, &Registry::builtin(), Some(dir.path())).unwrap();
    let files = emit_report(&out.record, Format::Csv, dir.path()).unwrap();
    let growth = std::fs::read_to_string(dir.path().join("z_growth_a.csv")).unwrap();
    assert_eq!(growth.lines().next(), Some("t,mean_ratio,q999_ratio,max_ratio"));
    assert_eq!(growth.lines().count(), 1 + cfg.grid.steps);
    assert!(files.iter().any(|f| f.ends_with("uniqueness_a_b.csv")));
    emit_report(&out.record, Format::Json, dir.path()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["uniqueness"]["pass"].is_boolean());
    assert_eq!(report["config_hash"], serde_json::json!(cfg.hash()));
    let reloaded = RunRecord::load(dir.path()).unwrap();
    assert_eq!(reloaded, out.record);
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = load_config(shipped("uniqueness-f2")).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, &Registry::builtin(), Some(a.path())).unwrap().record;
    let rb = run_experiment(&cfg, &Registry::builtin(), Some(b.path())).unwrap().record;
    assert_eq!(ra.artifacts, rb.artifacts);
    assert_eq!(ra.summary.config_hash, rb.summary.config_hash);
    assert_eq!(
        std::fs::read(a.path().join(SUMMARY)).unwrap(),
        std::fs::read(b.path().join(SUMMARY)).unwrap()
    );
    for art in &ra.artifacts {
        assert!(a.path().join(&art.path).is_file(), "{}", art.path);
    }
}

#[test]
fn tensors_round_trip_through_the_binary_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(r#"{"sampling": {"paths": 64, "seed": 9}, "grid": {"steps": 4}}"#);
    let out = run_experiment(&cfg, &Registry::builtin(), Some(dir.path())).unwrap();
    let (header, data) = qbsde::engine::tensor_io::read_tensor(dir.path(), "states").unwrap();
    assert_eq!(header.shape, vec![64, 5, 1]);
    assert_eq!(header.seed, Some(9));
    assert_eq!(data, out.paths.unwrap().states());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qbsde")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ok = cli(&["run", "--config", shipped("zero-data").to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("report.json").is_file());
    let csv = cli(&["report", "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    assert!(out.join("z_growth_lsmc.csv").is_file());

    let strict = dir.path().join("strict.json");
    std::fs::write(
        &strict,
        r#"{"sampling": {"paths": 300, "seed": 1}, "generator": {"g": {"name": "quadratic"}, "h": {"name": "state"},
            "constants": {"k_y": 0, "k_z": 1}},
            "solvers": [{"id": "a", "method": "lsmc", "basis": {"degree": 1}}, {"id": "b", "method": "cole_hopf"}],
            "diagnostics": {"uniqueness": [{"a": "a", "b": "b", "scheme_tol": 0}]}}"#,
    )
    .unwrap();
    let failed = cli(&["run", "--config", strict.to_str().unwrap(), "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(failed.status.code(), Some(1), "{}", String::from_utf8_lossy(&failed.stdout));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"sampling": {"paths": 10, "seed": 1}, "generator": {"g": {"name": "nonexistent"}}}"#).unwrap();
    let invalid = cli(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("nonconvex"));

    let listing = cli(&["list-registry"]);
    let entries: serde_json::Value = serde_json::from_slice(&listing.stdout).unwrap();
    assert!(entries.as_array().unwrap().iter().any(|e| e["name"] == "nonconvex"));
}

#[test]
fn seed_override_changes_hash_and_env_threads_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped("zero-data");
    let a = cli(&["validate", "--config", cfg.to_str().unwrap()]);
    let b = cli(&["validate", "--config", cfg.to_str().unwrap(), "--seed-override", "77"]);
    assert_ne!(a.stdout, b.stdout);
    let run = Command::new(env!("CARGO_BIN_EXE_qbsde"))
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed-override", "77"])
        .env("QBSDE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    let record = RunRecord::load(dir.path()).unwrap();
    assert_eq!(record.summary.seed, 77);
}
