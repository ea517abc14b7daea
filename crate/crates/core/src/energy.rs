//! Battery, flight and data-collection energy accounting.
//!
//! Flight draws constant power, so its energy is linear in distance. Data
//! collection at a monitoring point lasts `bits / rate` seconds at a Shannon
//! rate over the allocated share of the band, with noise scaled by that share
//! and a channel gain fixed by the flight altitude.
//!
//! The battery starts full. At the charging stop it is refilled to capacity,
//! unless it was already depleted on the way there: a UAV that ran dry
//! never reaches the station, so the deficit carries through to the end of
//! the mission and the remaining energy is negative exactly when the mission
//! is infeasible.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use thiserror::Error;

use crate::graph::{NetworkGraph, NodeKind};
use crate::trajectory::Route;

const BITS_PER_MB: f64 = 8.0e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("monitoring point {id} has {task_mb} MB to send but no bandwidth or power")]
    InfeasibleAllocation { id: usize, task_mb: f64 },
    #[error("allocation covers {got} monitoring points, graph has {expected}")]
    AllocationSize { expected: usize, got: usize },
    #[error("allocation out of bounds: {0}")]
    AllocationBounds(String),
    #[error("energy config field `{0}` must be finite and positive")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModelConfig {
    pub battery_capacity_j: f64,
    pub flight_power_w: f64,
    pub speed_mps: f64,
    pub total_bandwidth_hz: f64,
    pub max_tx_power_w: f64,
    pub circuit_power_w: f64,
    pub channel_gain_at_1m: f64,
    pub noise_psd_w_per_hz: f64,
    pub altitude_m: f64,
}

impl Default for EnergyModelConfig {
    fn default() -> Self {
        // SNR = 1e-8 / 100^2 / (1e-20 * 1e7) = 10 at 1 W over the full band.
        Self {
            battery_capacity_j: 30_000.0,
            flight_power_w: 200.0,
            speed_mps: 10.0,
            total_bandwidth_hz: 10.0e6,
            max_tx_power_w: 1.0,
            circuit_power_w: 50.0,
            channel_gain_at_1m: 1.0e-8,
            noise_psd_w_per_hz: 1.0e-20,
            altitude_m: 100.0,
        }
    }
}

impl EnergyModelConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let fields = [
            ("battery_capacity_j", self.battery_capacity_j),
            ("flight_power_w", self.flight_power_w),
            ("speed_mps", self.speed_mps),
            ("total_bandwidth_hz", self.total_bandwidth_hz),
            ("max_tx_power_w", self.max_tx_power_w),
            ("circuit_power_w", self.circuit_power_w),
            ("channel_gain_at_1m", self.channel_gain_at_1m),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("altitude_m", self.altitude_m),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnergyError::BadConfig(name));
            }
        }
        Ok(())
    }

    /// Channel power gain at the flight altitude.
    pub fn channel_gain(&self) -> f64 {
        self.channel_gain_at_1m / (self.altitude_m * self.altitude_m)
    }

    pub fn flight_j_per_m(&self) -> f64 {
        self.flight_power_w / self.speed_mps
    }
}

/// Per-monitor bandwidth share and transmit power, indexed in ascending
/// monitor id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub bandwidth_fraction: Vec<f64>,
    pub tx_power_w: Vec<f64>,
}

impl Allocation {
    /// Equal bandwidth shares, every point at full power.
    pub fn uniform(n_monitors: usize, cfg: &EnergyModelConfig) -> Self {
        Self {
            bandwidth_fraction: vec![1.0 / n_monitors as f64; n_monitors],
            tx_power_w: vec![cfg.max_tx_power_w; n_monitors],
        }
    }

    pub fn len(&self) -> usize {
        self.bandwidth_fraction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidth_fraction.is_empty()
    }

    pub fn validate(&self, n_monitors: usize, cfg: &EnergyModelConfig) -> Result<(), EnergyError> {
        if self.bandwidth_fraction.len() != n_monitors || self.tx_power_w.len() != n_monitors {
            return Err(EnergyError::AllocationSize {
                expected: n_monitors,
                got: self.bandwidth_fraction.len().min(self.tx_power_w.len()),
            });
        }
        if self.bandwidth_fraction.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(EnergyError::AllocationBounds("bandwidth fraction outside [0, 1]".into()));
        }
        let total: f64 = self.bandwidth_fraction.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(EnergyError::AllocationBounds(format!("bandwidth fractions sum to {total}")));
        }
        if self.tx_power_w.iter().any(|p| !(0.0..=cfg.max_tx_power_w).contains(p)) {
            return Err(EnergyError::AllocationBounds(format!("transmit power outside [0, {}] W", cfg.max_tx_power_w)));
        }
        Ok(())
    }
}

pub fn flight_energy(distance_m: f64, cfg: &EnergyModelConfig) -> f64 {
    cfg.flight_power_w * distance_m / cfg.speed_mps
}

/// Achievable rate in bit/s for a bandwidth share and transmit power.
pub fn link_rate(bandwidth_fraction: f64, tx_power_w: f64, cfg: &EnergyModelConfig) -> f64 {
    let bw = bandwidth_fraction * cfg.total_bandwidth_hz;
    let snr = tx_power_w * cfg.channel_gain() / (cfg.noise_psd_w_per_hz * bw);
    bw * (1.0 + snr).log2()
}

/// Energy to upload `task_mb` from one monitoring point.
pub fn collection_energy(
    task_mb: f64,
    bandwidth_fraction: f64,
    tx_power_w: f64,
    cfg: &EnergyModelConfig,
) -> Result<f64, EnergyError> {
    if task_mb == 0.0 {
        return Ok(0.0);
    }
    if !(bandwidth_fraction > 0.0 && tx_power_w > 0.0) {
        return Err(EnergyError::InfeasibleAllocation { id: 0, task_mb });
    }
    let time = task_mb * BITS_PER_MB / link_rate(bandwidth_fraction, tx_power_w, cfg);
    Ok((tx_power_w + cfg.circuit_power_w) * time)
}

/// Collection energy and its partial derivatives with respect to the
/// bandwidth fraction and the transmit power. Requires positive inputs.
pub fn collection_energy_grad(
    task_mb: f64,
    bandwidth_fraction: f64,
    tx_power_w: f64,
    cfg: &EnergyModelConfig,
) -> (f64, f64, f64) {
    if task_mb == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let bits = task_mb * BITS_PER_MB;
    let b_total = cfg.total_bandwidth_hz;
    let bw = bandwidth_fraction * b_total;
    let g_over_n0 = cfg.channel_gain() / cfg.noise_psd_w_per_hz;
    let snr = tx_power_w * g_over_n0 / bw;
    let rate = bw * (1.0 + snr).log2();
    let drate_dbw = (1.0 + snr).log2() - snr / ((1.0 + snr) * LN_2);
    let drate_df = b_total * drate_dbw;
    let drate_dp = g_over_n0 / (LN_2 * (1.0 + snr));
    let total_power = tx_power_w + cfg.circuit_power_w;
    let energy = total_power * bits / rate;
    let de_df = -total_power * bits / (rate * rate) * drate_df;
    let de_dp = bits / rate - total_power * bits / (rate * rate) * drate_dp;
    (energy, de_df, de_dp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LegEnergy {
    pub from: usize,
    pub to: usize,
    pub distance_m: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryEventKind {
    Depart,
    Arrive,
    Collect,
    Recharge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryEvent {
    pub kind: BatteryEventKind,
    pub node: usize,
    pub battery_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub legs: Vec<LegEnergy>,
    /// `(monitor id, joules)` in visit order.
    pub collection: Vec<(usize, f64)>,
    pub trace: Vec<BatteryEvent>,
    pub initial_j: f64,
    pub recharge_j: f64,
    pub consumed_j: f64,
    pub remaining_j: f64,
    pub feasible: bool,
}

impl EnergyReport {
    pub fn flight_j(&self) -> f64 {
        self.legs.iter().map(|l| l.energy_j).sum()
    }

    pub fn collection_j(&self) -> f64 {
        self.collection.iter().map(|c| c.1).sum()
    }

    pub fn deficit_j(&self) -> f64 {
        self.trace.iter().map(|e| e.battery_j).fold(0.0, f64::min).abs()
    }

    /// `initial + recharge - consumed - remaining`, zero up to rounding.
    pub fn conservation_error(&self) -> f64 {
        self.initial_j + self.recharge_j - self.consumed_j - self.remaining_j
    }
}

/// Per-monitor collection energies under `alloc`, indexed by node id (zero
/// for nodes without a task).
pub fn collection_table(
    graph: &NetworkGraph,
    alloc: &Allocation,
    cfg: &EnergyModelConfig,
) -> Result<Vec<f64>, EnergyError> {
    alloc.validate(graph.monitor_count(), cfg)?;
    let mut table = vec![0.0; graph.len()];
    for (i, &m) in graph.monitors().iter().enumerate() {
        let task = graph.node(m).task_mb;
        table[m] = collection_energy(task, alloc.bandwidth_fraction[i], alloc.tx_power_w[i], cfg)
            .map_err(|_| EnergyError::InfeasibleAllocation { id: m, task_mb: task })?;
    }
    Ok(table)
}

/// Flies `route` leg by leg and returns the full battery trace.
pub fn simulate(
    route: &Route,
    alloc: &Allocation,
    graph: &NetworkGraph,
    cfg: &EnergyModelConfig,
) -> Result<EnergyReport, EnergyError> {
    let table = collection_table(graph, alloc, cfg)?;
    let cap = cfg.battery_capacity_j;
    let mut battery = cap;
    let mut report = EnergyReport {
        legs: Vec::new(),
        collection: Vec::new(),
        trace: vec![BatteryEvent { kind: BatteryEventKind::Depart, node: graph.start(), battery_j: cap }],
        initial_j: cap,
        recharge_j: 0.0,
        consumed_j: 0.0,
        remaining_j: 0.0,
        feasible: true,
    };
    let stops = route.stops(graph);
    for pair in stops.windows(2) {
        let (from, to) = (pair[0], pair[1]);
        let distance = graph.distance(from, to);
        let e = flight_energy(distance, cfg);
        battery -= e;
        report.consumed_j += e;
        report.legs.push(LegEnergy { from, to, distance_m: distance, energy_j: e });
        report.trace.push(BatteryEvent { kind: BatteryEventKind::Arrive, node: to, battery_j: battery });
        match graph.node(to).kind {
            NodeKind::Monitor => {
                let c = table[to];
                battery -= c;
                report.consumed_j += c;
                report.collection.push((to, c));
                report.trace.push(BatteryEvent { kind: BatteryEventKind::Collect, node: to, battery_j: battery });
            }
            NodeKind::Charge if battery >= 0.0 => {
                report.recharge_j += cap - battery;
                battery = cap;
                report.trace.push(BatteryEvent { kind: BatteryEventKind::Recharge, node: to, battery_j: battery });
            }
            _ => {}
        }
    }
    report.remaining_j = battery;
    report.feasible = report.trace.iter().all(|e| e.battery_j >= 0.0);
    Ok(report)
}
