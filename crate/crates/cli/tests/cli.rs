use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use silsim_core::harness::SweepSpace;

fn silsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silsim")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_1_and_help_with_0() {
    assert_eq!(silsim(&[]).status.code(), Some(1));
    assert_eq!(silsim(&["frobnicate"]).status.code(), Some(1));
    let help = silsim(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("sweep"));
}

#[test]
fn bad_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"num_agents": 64, "homophilly": true}"#).unwrap();
    let out = silsim(&["run", "--config", path(&config), "--out", path(&tmp.path().join("run"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = SweepSpace::default_grid().base;
    config.steps = 60;
    config.survey_interval = 20;
    config.backend_id = "stub-volatile".into();
    let config_path = tmp.path().join("config.json");
    fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let run = tmp.path().join("run");
    let out = silsim(&["run", "--config", path(&config_path), "--out", path(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("4 snapshots"));
    for f in [
        "config.json",
        "graph.txt",
        "placement.json",
        "events.jsonl",
        "surveys.jsonl",
        "final_state.json",
        "metrics.json",
        "run.json",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
}

#[test]
fn sweep_aggregate_render_and_stats_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let mut space = SweepSpace::default_grid();
    space.num_agents = vec![32];
    space.base.steps = 40;
    space.base.survey_interval = 20;
    let space_path = tmp.path().join("space.json");
    fs::write(&space_path, serde_json::to_string(&space).unwrap()).unwrap();
    let sweep = tmp.path().join("sweep");
    let tables = tmp.path().join("tables");
    let svg = tmp.path().join("plot.svg");

    let out = silsim(&["sweep", "--space", path(&space_path), "--n", "8", "--seed", "3", "--out", path(&sweep)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "8 runs, 0 resumed, 0 failed");
    let again = silsim(&["sweep", "--space", path(&space_path), "--n", "8", "--seed", "3", "--out", path(&sweep)]);
    assert_eq!(String::from_utf8_lossy(&again.stdout).trim(), "8 runs, 8 resumed, 0 failed");

    assert!(silsim(&["aggregate", "--runs", path(&sweep), "--out", path(&tables)]).status.success());
    let runs_csv = fs::read_to_string(tables.join("runs.csv")).unwrap();
    assert_eq!(runs_csv.lines().count(), 9);

    assert!(silsim(&["render", "--runs", path(&sweep), "--out", path(&svg)]).status.success());
    assert_eq!(fs::read_to_string(&svg).unwrap().matches("<polyline").count(), 8);

    let stats = silsim(&["stats", "--metric", "ncc", "--factor", "homophily", "--input", path(&tables.join("runs.csv"))]);
    assert!(stats.status.success(), "{}", String::from_utf8_lossy(&stats.stderr));
    assert!(!stats.stdout.is_empty());
}
