use std::path::Path;
use std::process::Command;

use pabs::config::{Experiment, ExperimentConfig};
use pabs::experiments;

fn pabs(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pabs")).args(args).current_dir(dir).env_remove("PABS_SEED").output().unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn malformed_config_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seeds = [0\n").unwrap();
    let out = pabs(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    std::fs::write(dir.path().join("unknown.toml"), "experiment = \"trpo\"\nsedes = [1]\n").unwrap();
    let out = pabs(&["run", "unknown.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sedes"));
}

#[test]
fn invalid_values_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "experiment = \"dges\"\n[dges.run]\nbeta = -1.0\n").unwrap();
    assert_eq!(pabs(&["run", "cfg.toml"], dir.path()).status.code(), Some(3));
    assert_eq!(pabs(&["trpo", "--metric", "xyz"], dir.path()).status.code(), Some(3));
    assert_eq!(pabs(&["gridworld-metrics", "--config", "cfg.toml", "--out", "o"], dir.path()).status.code(), Some(0));
}

#[test]
fn selftest_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = pabs(&["selftest", "--out", "st"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("st/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "selftest");
    assert_eq!(manifest["seeds"], serde_json::json!([0]));
    let table = std::fs::read_to_string(dir.path().join("st/selftest.csv")).unwrap();
    assert!(table.starts_with("# config_hash: "));
    assert!(table.lines().skip(2).all(|l| l.ends_with(",true")));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "experiment = \"trpo\"\nseeds = [4]\n[trpo.run]\nsigma = 0.3\nmetric = \"vpi\"\n").unwrap();
    let cli = <pabs::Cli as clap::Parser>::parse_from([
        "pabs", "run", path.to_str().unwrap(), "--seed", "1", "--seed", "2", "--metric", "pi", "--sigma", "0.1", "--kernel-count", "3",
    ]);
    let cfg = pabs::resolve(&cli.command).unwrap();
    assert_eq!(cfg.experiment, Experiment::Trpo);
    assert_eq!(cfg.seeds, vec![1, 2]);
    assert_eq!(cfg.trpo.run.sigma, 0.1);
    assert_eq!(cfg.trpo.run.metric.map(|m| m.to_string()).as_deref(), Some("pi"));
    assert_eq!(cfg.trpo.run.kernel.count, 3);
}

#[test]
fn resolved_config_round_trips() {
    let cfg = ExperimentConfig::default();
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text, "echo").unwrap(), cfg);
}

#[test]
fn gridworld_reruns_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig { experiment: Experiment::GridworldMetrics, ..ExperimentConfig::default() };
    cfg.output_dir = dir.path().join("a");
    experiments::run(&cfg).unwrap();
    let first = csv_files(&cfg.output_dir);
    assert_eq!(first.len(), 3);
    cfg.output_dir = dir.path().join("b");
    experiments::run(&cfg).unwrap();
    assert_eq!(csv_files(&cfg.output_dir), first);
}

#[test]
fn artifacts_stay_inside_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { experiment: Experiment::Selftest, output_dir: dir.path().join("out"), ..ExperimentConfig::default() };
    let entries = experiments::run(&cfg).unwrap();
    let top: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, vec![std::ffi::OsString::from("out")]);
    for e in entries {
        assert!(cfg.output_dir.join(&e.path).is_file());
    }
}
