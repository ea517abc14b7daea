//! Experiment runner: configuration, battery calibration, the training-gap
//! experiment and the task-size sweep, plus their CSV and manifest output.

mod calibrate;
mod gap;
mod output;
mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibrate::{calibrate_battery, Calibration};
pub use gap::{run_gap_experiment, GapReport, MethodCurve};
pub use output::{gap_csv, sweep_csv, update_manifest, write_gap_outputs, write_sweep_outputs};
pub use sweep::{run_tasksize_sweep, OracleReference, SweepReport, SweepRow};

use crate::allocator::{AllocatorError, TrainHyper};
use crate::decision::{BackendError, DecisionBackendSpec};
use crate::energy::{EnergyError, EnergyModelConfig};
use crate::graph::{GraphError, ScenarioConfig};
use crate::trajectory::TrajectoryError;

pub const GAP_CSV: &str = "gap_curve.csv";
pub const SWEEP_CSV: &str = "remaining_energy.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Allocator(#[from] AllocatorError),
}

impl ExperimentError {
    /// Whether the error stems from the configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Read { .. }
                | ExperimentError::Backend(BackendError::Config(_))
        )
    }
}

/// How the sweep obtains its stage-one routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePlanning {
    /// One route per trial, proposed at the heaviest swept task size and
    /// flown at every size, so only the task size varies.
    Shared,
    /// A fresh proposal at every task size.
    PerTask,
}

/// Experiment-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Uniform task sizes swept, ascending.
    pub task_size_sweep: Vec<f64>,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub train_instances: usize,
    pub validation_instances: usize,
    /// Range per-point tasks are drawn from in the gap experiment.
    pub task_range_mb: [f64; 2],
    /// Replace the configured battery capacity with the calibrated one.
    pub calibrate: bool,
    /// Task sizes bracketing the calibrated capacity.
    pub calibration_tasks_mb: [f64; 2],
    pub route_planning: RoutePlanning,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            task_size_sweep: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0],
            trials: 1,
            output_dir: PathBuf::from("results"),
            train_instances: 32,
            validation_instances: 8,
            task_range_mb: [5.0, 35.0],
            calibrate: true,
            calibration_tasks_mb: [30.0, 35.0],
            route_planning: RoutePlanning::Shared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub energy: EnergyModelConfig,
    pub backend: DecisionBackendSpec,
    pub hyper: TrainHyper,
    pub experiment: ExperimentSettings,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ExperimentError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ExperimentError::Config(msg) => ExperimentError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let x = &self.experiment;
        if x.task_size_sweep.is_empty() {
            return bad("task_size_sweep must not be empty".into());
        }
        if x.task_size_sweep.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("task sizes must be positive".into());
        }
        if x.task_size_sweep.windows(2).any(|w| w[1] <= w[0]) {
            return bad("task_size_sweep must be strictly ascending".into());
        }
        if x.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if x.train_instances == 0 {
            return bad("train_instances must be at least 1".into());
        }
        let [lo, hi] = x.task_range_mb;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("task_range_mb [{lo}, {hi}] is not a positive range"));
        }
        let [c_lo, c_hi] = x.calibration_tasks_mb;
        if !(c_lo > 0.0 && c_hi > c_lo && c_hi.is_finite()) {
            return bad(format!("calibration_tasks_mb [{c_lo}, {c_hi}] must be positive and ascending"));
        }
        self.energy.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.hyper.validate().map_err(ExperimentError::Config)?;
        self.backend.validate()?;
        Ok(())
    }

    /// Energy settings with the calibrated capacity when calibration is on.
    pub fn resolved_energy(&self) -> Result<(EnergyModelConfig, Option<Calibration>), ExperimentError> {
        if !self.experiment.calibrate {
            return Ok((self.energy.clone(), None));
        }
        let cal = calibrate_battery(self)?;
        let energy = EnergyModelConfig { battery_capacity_j: cal.capacity_j, ..self.energy.clone() };
        Ok((energy, Some(cal)))
    }
}

/// Seed for one trial; trial 0 uses the configured seed.
pub(crate) fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64 * 1_000_003)
}
