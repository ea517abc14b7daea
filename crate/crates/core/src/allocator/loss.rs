use serde::{Deserialize, Serialize};

use crate::energy::{collection_energy_grad, flight_energy, Allocation, EnergyModelConfig};
use crate::graph::NetworkGraph;
use crate::trajectory::Route;

/// Weights of the estimate, consumption and deficit terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub estimate: f64,
    pub consumption: f64,
    pub deficit: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { estimate: 1.0, consumption: 0.1, deficit: 10.0 }
    }
}

/// The simulator reduced to what depends on the allocation, for a fixed
/// route: flight energy per segment plus one collection term per point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTerms {
    pub flight_before_j: f64,
    pub flight_after_j: f64,
    /// Task per monitoring point, allocation order.
    pub tasks_mb: Vec<f64>,
    /// Whether each point is visited after the charging stop.
    pub after_charge: Vec<bool>,
    pub capacity_j: f64,
    cfg: EnergyModelConfig,
}

/// Energy outcome with derivatives of collection energy per point.
#[derive(Debug, Clone, PartialEq)]
pub struct TermsEval {
    pub consumed_j: f64,
    pub before_j: f64,
    pub after_j: f64,
    pub remaining_j: f64,
    pub deficit_j: f64,
    pub dcollect_dfraction: Vec<f64>,
    pub dcollect_dpower: Vec<f64>,
}

impl EnergyTerms {
    pub fn new(graph: &NetworkGraph, route: &Route, cfg: &EnergyModelConfig) -> Self {
        let stops = route.stops(graph);
        let charge_at = route.charge_slot() + 1;
        let leg = |w: &[usize]| flight_energy(graph.distance(w[0], w[1]), cfg);
        let flight_before_j = stops[..=charge_at].windows(2).map(leg).sum();
        let flight_after_j = stops[charge_at..].windows(2).map(leg).sum();
        let monitors = graph.monitors();
        let mut after_charge = vec![false; monitors.len()];
        for &v in &route.visit_order()[route.charge_slot()..] {
            let i = monitors.binary_search(&v).expect("route visits monitors");
            after_charge[i] = true;
        }
        Self {
            flight_before_j,
            flight_after_j,
            tasks_mb: monitors.iter().map(|&m| graph.node(m).task_mb).collect(),
            after_charge,
            capacity_j: cfg.battery_capacity_j,
            cfg: cfg.clone(),
        }
    }

    pub fn evaluate(&self, alloc: &Allocation) -> TermsEval {
        let n = self.tasks_mb.len();
        let mut before = self.flight_before_j;
        let mut after = self.flight_after_j;
        let mut df = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for i in 0..n {
            let (e, de_df, de_dp) =
                collection_energy_grad(self.tasks_mb[i], alloc.bandwidth_fraction[i], alloc.tx_power_w[i], &self.cfg);
            if self.after_charge[i] {
                after += e;
            } else {
                before += e;
            }
            df[i] = de_df;
            dp[i] = de_dp;
        }
        let cap = self.capacity_j;
        let remaining = if before <= cap { cap - after } else { cap - before - after };
        TermsEval {
            consumed_j: before + after,
            before_j: before,
            after_j: after,
            remaining_j: remaining,
            deficit_j: (-remaining).max(0.0),
            dcollect_dfraction: df,
            dcollect_dpower: dp,
        }
    }

    /// Derivative of the deficit with respect to each point's collection energy.
    pub fn deficit_sensitivity(&self, eval: &TermsEval) -> Vec<f64> {
        if eval.deficit_j <= 0.0 {
            return vec![0.0; self.tasks_mb.len()];
        }
        if eval.before_j > self.capacity_j {
            vec![1.0; self.tasks_mb.len()]
        } else {
            self.after_charge.iter().map(|&a| f64::from(u8::from(a))).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub estimate_term: f64,
    pub consumption_term: f64,
    pub deficit_term: f64,
}

/// Joint loss on normalized energies: squared estimate error, consumption,
/// and squared deficit. `estimate` is in units of `scale_j`.
pub fn joint_loss(
    estimate: f64,
    consumed_j: f64,
    deficit_j: f64,
    weights: &LossWeights,
    scale_j: f64,
) -> LossBreakdown {
    let m = consumed_j / scale_j;
    let d = deficit_j / scale_j;
    let estimate_term = weights.estimate * (estimate - m).powi(2);
    let consumption_term = weights.consumption * m;
    let deficit_term = weights.deficit * d * d;
    LossBreakdown {
        total: estimate_term + consumption_term + deficit_term,
        estimate_term,
        consumption_term,
        deficit_term,
    }
}

/// Partial derivatives of [`joint_loss`] with respect to the estimate, the
/// consumed energy and the deficit.
pub fn joint_loss_grad(
    estimate: f64,
    consumed_j: f64,
    deficit_j: f64,
    weights: &LossWeights,
    scale_j: f64,
) -> (f64, f64, f64) {
    let m = consumed_j / scale_j;
    let d_estimate = 2.0 * weights.estimate * (estimate - m);
    let d_consumed = (-2.0 * weights.estimate * (estimate - m) + weights.consumption) / scale_j;
    let d_deficit = 2.0 * weights.deficit * deficit_j / (scale_j * scale_j);
    (d_estimate, d_consumed, d_deficit)
}
