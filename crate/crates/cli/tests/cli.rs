use std::process::{Command, Output};

use uavgraph_core::{build_scenario, exhaustive_optimal, Allocation, ExperimentConfig};

fn uavgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavgraph")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn oracle_matches_the_library() {
    let out = uavgraph(&["oracle", "--config", "default"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = ExperimentConfig::default();
    let (energy, _) = cfg.resolved_energy().unwrap();
    let graph = build_scenario(&cfg.scenario).unwrap();
    let best = exhaustive_optimal(&graph, &energy, &Allocation::uniform(graph.monitor_count(), &energy)).unwrap();
    let text = stdout(&out);
    assert!(text.contains(&format!("consumed_j: {:.6}", best.score.consumed_j)), "{text}");
    assert!(text.contains(&format!("charge_slot: {}", best.route.charge_slot())), "{text}");
}

#[test]
fn roundtrip_succeeds() {
    let out = uavgraph(&["roundtrip"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("roundtrip ok"));
}

#[test]
fn missing_config_exits_with_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("absent.toml");
    let out = uavgraph(&["oracle", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[experiment]\ntrials = 0\n").unwrap();
    let out = uavgraph(&["oracle", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_with_two() {
    let out = uavgraph(&["oracle", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = uavgraph(&["calibrate", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = ExperimentConfig::load(&dir.path().join("resolved_config.toml")).unwrap();
    assert!(!resolved.experiment.calibrate);
    let again = uavgraph(&["oracle", "--config", dir.path().join("resolved_config.toml").to_str().unwrap()]);
    assert_eq!(stdout(&again), stdout(&uavgraph(&["oracle"])));
}

#[test]
fn propose_with_heuristic_reports_no_fallback() {
    let out = uavgraph(&["propose", "--backend", "heuristic", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("fallback: false"), "{text}");
    assert!(text.starts_with("Route: A -> "), "{text}");
}
