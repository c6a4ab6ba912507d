use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bbm_harness::RunManifest;

fn bbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbm")).args(args).output().expect("bbm runs")
}

fn run_with(mode: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![mode, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bbm(&args)
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::load(&dir.join("out/manifest.json")).unwrap()
}

#[test]
fn verify_specfun_passes_without_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("specfun");
    let status = bbm(&["verify-specfun", "--out", out.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = fs::read_to_string(out.join("specfun.csv")).unwrap();
    assert!(csv.starts_with("check,max_error,tolerance,passed\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
}

const SIMULATE: &str = r#"{
    "mode": "simulate",
    "params": { "d": 2, "beta": 1.0, "offspring": [[0, 0.1], [2, 0.6], [3, 0.3]], "theta": [0.2, -0.1] },
    "schedule": ["1", "2"],
    "seeds": { "list": ["42"] }
}"#;

#[test]
fn simulate_writes_snapshots_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_with("simulate", SIMULATE, dir.path(), &[]).status.code(), Some(0));
    let first = manifest(dir.path());
    let names: Vec<&str> = first.outputs.iter().map(|o| o.path.as_str()).collect();
    assert_eq!(names, ["snapshot_s42_000.csv", "snapshot_s42_001.csv"]);
    assert_eq!(first.seeds.len(), 1);
    assert_eq!(first.seeds[0].status, "ok");
    let header = fs::read_to_string(dir.path().join("out/snapshot_s42_001.csv")).unwrap();
    assert!(header.starts_with("# t=2 d=2 n=") || header.starts_with("t=2 d=2 n="), "{header}");

    for workers in ["1", "4"] {
        assert_eq!(run_with("simulate", SIMULATE, dir.path(), &["--workers", workers]).status.code(), Some(0));
        let again = manifest(dir.path());
        assert_eq!(again.digests(), first.digests(), "workers {workers}");
        assert_eq!(again.workers.to_string(), workers);
    }
}

#[test]
fn ensemble_outputs_do_not_depend_on_workers() {
    let config = r#"{
        "params": { "d": 1, "theta": [0.3] },
        "schedule": ["1", "2", "3"],
        "seeds": { "base": "5", "count": 6 },
        "options": { "max_order": 2 }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_with("martingales", config, dir.path(), &["--workers", "1"]).status.code(), Some(0));
    let one = manifest(dir.path());
    assert_eq!(run_with("martingales", config, dir.path(), &["--workers", "3"]).status.code(), Some(0));
    let three = manifest(dir.path());
    assert_eq!(one.digests(), three.digests());
    assert_eq!(one.outputs.len(), 6 + 2);
    assert_eq!(one.outputs[0].path, "martingales_s5.csv");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_theta = SIMULATE.replace("[0.2, -0.1]", "[1.4, 1.0]");
    let out = run_with("simulate", &bad_theta, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.theta"));

    let out = run_with("martingales", SIMULATE, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`mode`"));

    let out = run_with("simulate", "{ not json", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(bbm(&["expansion-thm1", "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn population_cap_exits_with_three_and_names_the_seed() {
    let config = r#"{
        "params": { "d": 1 },
        "schedule": ["1", "6"],
        "seeds": { "base": "10", "count": 3 }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_with("simulate", config, dir.path(), &["--cap", "500"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed 1"), "{stderr}");
    let m = manifest(dir.path());
    assert_eq!(m.exit_code, 3);
    assert!(m.seeds.iter().any(|s| s.status.starts_with("error")));
}

#[test]
fn expected_population_above_cap_is_a_configuration_error() {
    let config = r#"{ "params": { "d": 1 }, "schedule": ["20"] }"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_with("simulate", config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`schedule`"));
}

#[test]
fn failed_checks_exit_with_one() {
    let config = r#"{
        "params": { "d": 1 },
        "schedule": ["1", "2", "3", "4"],
        "seeds": { "list": ["3"] },
        "options": { "max_order": 1, "cauchy_tol": 0.0 }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_with("martingales", config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(dir.path());
    assert!(!m.passed);
    assert!(m.outputs.iter().any(|o| o.path == "checks.csv"));
}

#[test]
fn expansion_outputs() {
    let config = r#"{
        "params": { "d": 1 },
        "schedule": ["2", "3", "4", "5"],
        "seeds": { "base": "1", "count": 3 },
        "options": { "a": [-1.0], "b": [1.0], "m": 1 }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_with("expansion-thm2", config, dir.path(), &[]);
    assert!(matches!(out.status.code(), Some(0 | 1)));
    let csv = fs::read_to_string(dir.path().join("out/expansion_s2.csv")).unwrap();
    assert!(csv.starts_with("s,ell,measured,partial_sum,residual\n"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/expansion_s2.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], "2");
    assert_eq!(json["horizon"], 5.0);
    assert!(json["slopes"]["r0"].is_number());
    assert!(json["params"]["d"] == 1);
    let summary = fs::read_to_string(dir.path().join("out/expansion_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4 * 2);
}

#[test]
fn moment_growth_table() {
    let config = r#"{
        "params": { "d": 1, "theta": [0.5] },
        "schedule": ["1", "2"],
        "seeds": { "base": "0", "count": 200 },
        "options": { "lambda": 0.0 }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_with("moment-growth", config, dir.path(), &["--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/moment_growth.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,estimate,std_error,ratio"));
    assert_eq!(lines.count(), 2);
}
