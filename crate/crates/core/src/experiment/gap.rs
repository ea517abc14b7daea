use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{trial_seed, Calibration, ExperimentConfig, ExperimentError};
use crate::allocator::{prepare, train, ModelKind, PreparedInstance, TrainHyper, TrainRecord};
use crate::decision::{propose_trajectory, DecisionEngine};
use crate::energy::EnergyModelConfig;
use crate::graph::{build_scenario, NetworkGraph, ScenarioConfig, TaskSizes};
use crate::trajectory::Route;

/// Validation-gap curve of one method, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCurve {
    pub kind: ModelKind,
    pub records: Vec<TrainRecord>,
    /// Set when training failed in any trial; `records` is then empty.
    pub error: Option<String>,
}

impl MethodCurve {
    pub fn initial_gap(&self) -> Option<f64> {
        self.records.first().map(|r| r.mean_abs_gap)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().map(|r| r.mean_abs_gap)
    }

    /// Trailing moving average of the gap over `window` episodes, one value
    /// per complete window.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        let gaps: Vec<f64> = self.records.iter().map(|r| r.mean_abs_gap).collect();
        gaps.windows(window.max(1)).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub energy: EnergyModelConfig,
    pub calibration: Option<Calibration>,
    pub train_instances: usize,
    pub validation_instances: usize,
    pub trials: usize,
    /// Instances whose route came from the heuristic fallback.
    pub fallback_routes: usize,
    pub methods: Vec<MethodCurve>,
}

impl GapReport {
    /// Whether every method trained and ended below its starting gap.
    pub fn all_improved(&self) -> bool {
        self.methods.iter().all(|m| match (m.initial_gap(), m.final_gap()) {
            (Some(a), Some(b)) => b < a,
            _ => false,
        })
    }
}

pub(crate) struct Instance {
    pub graph: NetworkGraph,
    pub route: Route,
    pub fallback: bool,
}

fn draw_instances(
    config: &ExperimentConfig,
    engine: &DecisionEngine,
    seed: u64,
    count: usize,
) -> Result<Vec<Instance>, ExperimentError> {
    let [lo, hi] = config.experiment.task_range_mb;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let tasks = (0..config.scenario.n_points).map(|_| (rng.gen_range(lo..=hi) * 100.0).round() / 100.0).collect();
        let scenario = ScenarioConfig { task_sizes_mb: TaskSizes::PerPoint(tasks), ..config.scenario.clone() };
        let graph = build_scenario(&scenario)?;
        let proposal = propose_trajectory(&graph, engine)?;
        out.push(Instance { graph, route: proposal.route, fallback: proposal.fallback });
    }
    Ok(out)
}

fn prepare_all(
    set: &[Instance],
    energy: &EnergyModelConfig,
    kind: ModelKind,
    hyper: &TrainHyper,
) -> Result<Vec<PreparedInstance>, ExperimentError> {
    set.iter().map(|i| prepare(&i.graph, &i.route, energy, kind, hyper).map_err(ExperimentError::from)).collect()
}

/// Trains all three allocators on one shared set of random-task instances
/// of the configured network and records the validation gap per episode.
pub fn run_gap_experiment(config: &ExperimentConfig) -> Result<GapReport, ExperimentError> {
    config.validate()?;
    let (energy, calibration) = config.resolved_energy()?;
    let engine = DecisionEngine::from_spec(&config.backend, &energy)?;
    let x = &config.experiment;
    let n_train = x.train_instances;

    // Routes are proposed sequentially: replay fixtures are consumed in order.
    let mut trials = Vec::with_capacity(x.trials);
    let mut fallback_routes = 0;
    for trial in 0..x.trials {
        let seed = trial_seed(config.hyper.seed, trial);
        let set = draw_instances(config, &engine, seed, n_train + x.validation_instances)?;
        fallback_routes += set.iter().filter(|i| i.fallback).count();
        trials.push((seed, set));
    }

    let jobs: Vec<(usize, ModelKind)> =
        (0..x.trials).flat_map(|t| ModelKind::ALL.into_iter().map(move |k| (t, k))).collect();
    let results: Vec<Result<Vec<TrainRecord>, String>> = jobs
        .par_iter()
        .map(|&(t, kind)| {
            let (seed, set) = &trials[t];
            let hyper = TrainHyper { seed: *seed, ..config.hyper.clone() };
            let (train_set, val_set) = set.split_at(n_train);
            let run = || -> Result<Vec<TrainRecord>, ExperimentError> {
                let tr = prepare_all(train_set, &energy, kind, &hyper)?;
                let va = prepare_all(val_set, &energy, kind, &hyper)?;
                Ok(train(kind, &tr, &va, &hyper, &energy)?.records)
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let methods = ModelKind::ALL
        .iter()
        .map(|&kind| {
            let runs: Vec<&Result<Vec<TrainRecord>, String>> =
                jobs.iter().zip(&results).filter(|(j, _)| j.1 == kind).map(|(_, r)| r).collect();
            if let Some(Err(e)) = runs.iter().find(|r| r.is_err()) {
                return MethodCurve { kind, records: Vec::new(), error: Some(e.clone()) };
            }
            let runs: Vec<&Vec<TrainRecord>> = runs.into_iter().map(|r| r.as_ref().expect("checked")).collect();
            let k = runs.len() as f64;
            let records = (0..runs[0].len())
                .map(|e| TrainRecord {
                    episode: runs[0][e].episode,
                    mean_abs_gap: runs.iter().map(|r| r[e].mean_abs_gap).sum::<f64>() / k,
                    loss: runs.iter().map(|r| r[e].loss).sum::<f64>() / k,
                })
                .collect();
            MethodCurve { kind, records, error: None }
        })
        .collect();

    Ok(GapReport {
        energy,
        calibration,
        train_instances: n_train,
        validation_instances: x.validation_instances,
        trials: x.trials,
        fallback_routes,
        methods,
    })
}
