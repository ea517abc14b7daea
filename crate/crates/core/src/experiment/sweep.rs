use rayon::prelude::*;
use serde::Serialize;

use super::{trial_seed, Calibration, ExperimentConfig, ExperimentError, RoutePlanning};
use crate::allocator::{evaluate, prepare, train, ModelKind, PreparedInstance, TrainHyper};
use crate::decision::{propose_trajectory, DecisionEngine};
use crate::energy::{simulate, Allocation, EnergyModelConfig, EnergyReport};
use crate::graph::{build_scenario, NetworkGraph, ScenarioConfig};
use crate::trajectory::{exhaustive_optimal, heuristic_route, Route, MAX_EXHAUSTIVE_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub task_size_mb: f64,
    pub method: ModelKind,
    pub trial: usize,
    pub remaining_energy_j: f64,
    pub feasible: bool,
    /// The route came from the heuristic after the backend failed.
    pub fallback: bool,
    pub consumed_j: f64,
    pub initial_j: f64,
    pub recharge_j: f64,
    pub estimate_j: f64,
    pub route: Route,
    pub allocation: Allocation,
}

/// Oracle route under uniform allocation, as a reference per task size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReference {
    pub task_size_mb: f64,
    pub remaining_energy_j: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub energy: EnergyModelConfig,
    pub calibration: Option<Calibration>,
    pub rows: Vec<SweepRow>,
    pub oracle: Vec<OracleReference>,
}

impl SweepReport {
    pub fn rows_for(&self, method: ModelKind, trial: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.method == method && r.trial == trial)
    }

    /// Whether remaining energy strictly falls with task size for every
    /// method and trial.
    pub fn strictly_decreasing(&self) -> bool {
        let trials = self.rows.iter().map(|r| r.trial).max().map_or(0, |t| t + 1);
        ModelKind::ALL.iter().all(|&m| {
            (0..trials).all(|t| {
                let v: Vec<f64> = self.rows_for(m, t).map(|r| r.remaining_energy_j).collect();
                v.windows(2).all(|w| w[1] < w[0])
            })
        })
    }

    /// Largest conservation error over all rows.
    pub fn max_conservation_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.initial_j + r.recharge_j - r.consumed_j - r.remaining_energy_j).abs())
            .fold(0.0, f64::max)
    }

    /// Method with the most remaining energy at `task_size_mb` in trial 0.
    pub fn best_method_at(&self, task_size_mb: f64) -> Option<ModelKind> {
        self.rows
            .iter()
            .filter(|r| r.trial == 0 && r.task_size_mb == task_size_mb)
            .max_by(|a, b| a.remaining_energy_j.total_cmp(&b.remaining_energy_j))
            .map(|r| r.method)
    }
}

struct Cell {
    trial: usize,
    task_mb: f64,
    graph: NetworkGraph,
    route: Route,
    fallback: bool,
    training: Vec<(NetworkGraph, Route)>,
    seed: u64,
}

/// Training set for one task size: scenarios redrawn with neighboring
/// seeds, every point carrying `task_mb`, routed by the heuristic at
/// `plan_mb`.
fn training_set(
    scenario: &ScenarioConfig,
    energy: &EnergyModelConfig,
    task_mb: f64,
    plan_mb: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(NetworkGraph, Route)>, ExperimentError> {
    (0..count)
        .map(|k| {
            let s = ScenarioConfig { seed: seed.wrapping_add(1 + k as u64), ..scenario.clone() };
            let base = build_scenario(&s)?;
            let planned = base.with_uniform_tasks(plan_mb)?;
            let uniform = Allocation::uniform(base.monitor_count(), energy);
            let r = heuristic_route(&planned, energy, &uniform)?.route;
            Ok((base.with_uniform_tasks(task_mb)?, r))
        })
        .collect()
}

fn run_cell(
    cell: &Cell,
    kind: ModelKind,
    config: &ExperimentConfig,
    energy: &EnergyModelConfig,
) -> Result<SweepRow, ExperimentError> {
    let hyper = TrainHyper { seed: cell.seed, ..config.hyper.clone() };
    let train_set: Vec<PreparedInstance> =
        cell.training.iter().map(|(g, r)| prepare(g, r, energy, kind, &hyper)).collect::<Result<_, _>>()?;
    let model = train(kind, &train_set, &[], &hyper, energy)?;
    let target = prepare(&cell.graph, &cell.route, energy, kind, &hyper)?;
    let eval = evaluate(&model.params, &target, &hyper, energy)?;
    let report: EnergyReport = simulate(&cell.route, &eval.allocation, &cell.graph, energy)?;
    Ok(SweepRow {
        task_size_mb: cell.task_mb,
        method: kind,
        trial: cell.trial,
        remaining_energy_j: report.remaining_j,
        feasible: report.feasible,
        fallback: cell.fallback,
        consumed_j: report.consumed_j,
        initial_j: report.initial_j,
        recharge_j: report.recharge_j,
        estimate_j: eval.estimate_j,
        route: cell.route.clone(),
        allocation: eval.allocation,
    })
}

/// For each task size: obtain a route from the configured backend (see
/// [`RoutePlanning`]), train each allocator on instances of that size,
/// apply it and simulate.
pub fn run_tasksize_sweep(config: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    config.validate()?;
    let (energy, calibration) = config.resolved_energy()?;
    let engine = DecisionEngine::from_spec(&config.backend, &energy)?;
    let base = build_scenario(&config.scenario)?;
    let x = &config.experiment;

    let heaviest = *x.task_size_sweep.last().expect("validated non-empty");
    let mut cells = Vec::new();
    for trial in 0..x.trials {
        let seed = trial_seed(config.hyper.seed, trial);
        let scenario_seed = trial_seed(config.scenario.seed, trial);
        let shared = match x.route_planning {
            RoutePlanning::Shared => Some(propose_trajectory(&base.with_uniform_tasks(heaviest)?, &engine)?),
            RoutePlanning::PerTask => None,
        };
        for &task_mb in &x.task_size_sweep {
            let graph = base.with_uniform_tasks(task_mb)?;
            let (proposal, plan_mb) = match &shared {
                Some(p) => (p.clone(), heaviest),
                None => (propose_trajectory(&graph, &engine)?, task_mb),
            };
            let training = training_set(&config.scenario, &energy, task_mb, plan_mb, x.train_instances, scenario_seed)?;
            cells.push(Cell {
                trial,
                task_mb,
                graph,
                route: proposal.route,
                fallback: proposal.fallback,
                training,
                seed,
            });
        }
    }

    let jobs: Vec<(usize, ModelKind)> =
        (0..cells.len()).flat_map(|c| ModelKind::ALL.into_iter().map(move |k| (c, k))).collect();
    let rows =
        jobs.par_iter().map(|&(c, kind)| run_cell(&cells[c], kind, config, &energy)).collect::<Result<Vec<_>, _>>()?;

    let oracle = if base.monitor_count() <= MAX_EXHAUSTIVE_POINTS {
        x.task_size_sweep
            .iter()
            .map(|&t| {
                let g = base.with_uniform_tasks(t)?;
                let best = exhaustive_optimal(&g, &energy, &Allocation::uniform(g.monitor_count(), &energy))?;
                Ok(OracleReference {
                    task_size_mb: t,
                    remaining_energy_j: best.score.remaining_j,
                    feasible: best.score.feasible,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?
    } else {
        Vec::new()
    };

    Ok(SweepReport { energy, calibration, rows, oracle })
}
