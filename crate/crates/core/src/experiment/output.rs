use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::{ExperimentConfig, ExperimentError, GapReport, SweepReport, GAP_CSV, MANIFEST, SWEEP_CSV};
use crate::allocator::ModelKind;

/// `episode,method,mean_abs_gap_joules`, methods in fixed order per episode.
pub fn gap_csv(report: &GapReport) -> String {
    let mut out = String::from("episode,method,mean_abs_gap_joules\n");
    let episodes = report.methods.iter().map(|m| m.records.len()).max().unwrap_or(0);
    for e in 0..episodes {
        for m in &report.methods {
            if let Some(r) = m.records.get(e) {
                writeln!(out, "{},{},{:.6}", r.episode, m.kind.method_name(), r.mean_abs_gap).expect("string write");
            }
        }
    }
    out
}

/// `task_size_mb,method,remaining_energy_joules,feasible,trial,fallback`,
/// sorted by trial, task size, then method.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut rows: Vec<_> = report.rows.iter().collect();
    rows.sort_by(|a, b| {
        a.trial.cmp(&b.trial).then(a.task_size_mb.total_cmp(&b.task_size_mb)).then(a.method.cmp(&b.method))
    });
    let mut out = String::from("task_size_mb,method,remaining_energy_joules,feasible,trial,fallback\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{},{},{}",
            r.task_size_mb,
            r.method.method_name(),
            r.remaining_energy_j,
            r.feasible,
            r.trial,
            r.fallback
        )
        .expect("string write");
    }
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, ExperimentError> {
    std::fs::write(&path, text).map_err(|source| ExperimentError::Write { path: path.clone(), source })?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Write { path: dir.to_path_buf(), source })
}

/// Merges `section` into the manifest in `dir` under `key`, together with
/// the resolved configuration. Keys are written in sorted order.
pub fn update_manifest(
    dir: &Path,
    config: &ExperimentConfig,
    key: &str,
    section: Value,
) -> Result<PathBuf, ExperimentError> {
    ensure_dir(dir)?;
    let path = dir.join(MANIFEST);
    let mut root = match std::fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => map,
            _ => Map::new(),
        },
        Err(_) => Map::new(),
    };
    root.insert("config".into(), serde_json::to_value(config).expect("config serializes"));
    root.insert(key.into(), section);
    let text = serde_json::to_string_pretty(&Value::Object(root)).expect("manifest serializes");
    write(path, &(text + "\n"))
}

pub fn write_gap_outputs(
    report: &GapReport,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    ensure_dir(dir)?;
    let csv = write(dir.join(GAP_CSV), &gap_csv(report))?;
    let methods: Vec<Value> = report
        .methods
        .iter()
        .map(|m| {
            json!({
                "method": m.kind.method_name(),
                "initial_gap_joules": m.initial_gap(),
                "final_gap_joules": m.final_gap(),
                "error": m.error,
            })
        })
        .collect();
    let section = json!({
        "battery_capacity_joules": report.energy.battery_capacity_j,
        "calibration": report.calibration,
        "seed": config.hyper.seed,
        "scenario_seed": config.scenario.seed,
        "backend": config.backend.kind.as_str(),
        "model_name": config.backend.model_name,
        "train_instances": report.train_instances,
        "validation_instances": report.validation_instances,
        "trials": report.trials,
        "fallback_routes": report.fallback_routes,
        "methods": methods,
        "all_methods_improved": report.all_improved(),
    });
    let manifest = update_manifest(dir, config, "gap", section)?;
    Ok(vec![csv, manifest])
}

pub fn write_sweep_outputs(
    report: &SweepReport,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    ensure_dir(dir)?;
    let csv = write(dir.join(SWEEP_CSV), &sweep_csv(report))?;
    let sweep = &config.experiment.task_size_sweep;
    let name = |k: Option<ModelKind>| k.map(|k| k.method_name());
    let gat_best: Vec<Value> = [25.0, 30.0]
        .iter()
        .filter(|t| sweep.contains(t))
        .map(|&t| json!({ "task_size_mb": t, "best_method": name(report.best_method_at(t)), "gat_best": report.best_method_at(t) == Some(ModelKind::Gat) }))
        .collect();
    let section = json!({
        "battery_capacity_joules": report.energy.battery_capacity_j,
        "calibration": report.calibration,
        "seed": config.hyper.seed,
        "scenario_seed": config.scenario.seed,
        "backend": config.backend.kind.as_str(),
        "model_name": config.backend.model_name,
        "training": "each allocator is trained once per task size on instances of that size, then applied to the configured scenario",
        "fallback_rows": report.rows.iter().filter(|r| r.fallback).count(),
        "strictly_decreasing": report.strictly_decreasing(),
        "max_conservation_error_joules": report.max_conservation_error(),
        "oracle_reference": report.oracle,
        "observations": {
            "best_method_at_smallest_task": sweep.first().map(|&t| json!({ "task_size_mb": t, "best_method": name(report.best_method_at(t)) })),
            "gat_at_25_30_mb": gat_best,
        },
    });
    let manifest = update_manifest(dir, config, "sweep", section)?;
    Ok(vec![csv, manifest])
}
