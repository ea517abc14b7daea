use serde::Serialize;

use super::{ExperimentConfig, ExperimentError};
use crate::energy::{Allocation, EnergyModelConfig};
use crate::graph::{build_scenario, NetworkGraph};
use crate::trajectory::{exhaustive_min_capacity, exhaustive_optimal, Route};

/// Calibrated battery capacity and the oracle outcomes that bracket it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub capacity_j: f64,
    pub low_task_mb: f64,
    pub high_task_mb: f64,
    /// Least capacity any route needs at the low task size.
    pub low_required_j: f64,
    pub high_required_j: f64,
    pub low_route: Route,
    pub high_route: Route,
    /// Oracle remaining energy at each bracket once the capacity is set.
    pub low_remaining_j: f64,
    pub high_remaining_j: f64,
}

fn oracle_need(graph: &NetworkGraph, energy: &EnergyModelConfig) -> Result<(Route, f64), ExperimentError> {
    let alloc = Allocation::uniform(graph.monitor_count(), energy);
    Ok(exhaustive_min_capacity(graph, energy, &alloc)?)
}

/// Sets the battery capacity halfway between the least capacity that keeps
/// some route feasible at the low and at the high uniform task size, so the
/// oracle route is feasible at the first and short of energy at the second.
pub fn calibrate_battery(config: &ExperimentConfig) -> Result<Calibration, ExperimentError> {
    let base = build_scenario(&config.scenario)?;
    let [low, high] = config.experiment.calibration_tasks_mb;
    let low_graph = base.with_uniform_tasks(low)?;
    let high_graph = base.with_uniform_tasks(high)?;
    let (low_route, low_need) = oracle_need(&low_graph, &config.energy)?;
    let (high_route, high_need) = oracle_need(&high_graph, &config.energy)?;
    if high_need <= low_need {
        return Err(ExperimentError::Calibration(format!(
            "required capacity does not grow from {low} MB ({low_need} J) to {high} MB ({high_need} J)"
        )));
    }
    let capacity = 0.5 * (low_need + high_need);
    let energy = EnergyModelConfig { battery_capacity_j: capacity, ..config.energy.clone() };
    let uniform = Allocation::uniform(base.monitor_count(), &energy);
    let low_best = exhaustive_optimal(&low_graph, &energy, &uniform)?;
    let high_best = exhaustive_optimal(&high_graph, &energy, &uniform)?;
    if !low_best.score.feasible {
        return Err(ExperimentError::Calibration(format!(
            "oracle route infeasible at {low} MB with capacity {capacity} J"
        )));
    }
    if high_best.score.remaining_j >= 0.0 {
        return Err(ExperimentError::Calibration(format!(
            "oracle route still has {} J left at {high} MB",
            high_best.score.remaining_j
        )));
    }
    Ok(Calibration {
        capacity_j: capacity,
        low_task_mb: low,
        high_task_mb: high,
        low_required_j: low_need,
        high_required_j: high_need,
        low_route,
        high_route,
        low_remaining_j: low_best.score.remaining_j,
        high_remaining_j: high_best.score.remaining_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::simulate;

    #[test]
    fn brackets_the_oracle() {
        let cfg = ExperimentConfig::default();
        let cal = calibrate_battery(&cfg).unwrap();
        assert!(cal.low_required_j < cal.capacity_j && cal.capacity_j < cal.high_required_j);
        assert!(cal.low_remaining_j > 0.0);
        assert!(cal.high_remaining_j < 0.0);

        let energy = EnergyModelConfig { battery_capacity_j: cal.capacity_j, ..cfg.energy.clone() };
        let g = build_scenario(&cfg.scenario).unwrap().with_uniform_tasks(35.0).unwrap();
        let best = exhaustive_optimal(&g, &energy, &Allocation::uniform(6, &energy)).unwrap();
        let report = simulate(&best.route, &Allocation::uniform(6, &energy), &g, &energy).unwrap();
        assert!(report.remaining_j < 0.0 && !report.feasible);
    }

    #[test]
    fn is_deterministic() {
        let cfg = ExperimentConfig::default();
        assert_eq!(calibrate_battery(&cfg).unwrap(), calibrate_battery(&cfg).unwrap());
    }

    #[test]
    fn longer_distances_need_more_capacity() {
        let cfg = ExperimentConfig::default();
        let mut doubled = cfg.clone();
        doubled.scenario.area_m = [800.0, 800.0];
        let g = build_scenario(&cfg.scenario).unwrap().scaled(2.0).unwrap();
        doubled.scenario.start = Some([g.node(0).x, g.node(0).y]);
        doubled.scenario.charge = Some([g.node(g.charge()).x, g.node(g.charge()).y]);
        doubled.scenario.monitors = Some(g.monitors().iter().map(|&m| [g.node(m).x, g.node(m).y]).collect());
        assert!(calibrate_battery(&doubled).unwrap().capacity_j > calibrate_battery(&cfg).unwrap().capacity_j);
    }
}
