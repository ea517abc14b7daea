//! Two-stage UAV mission planning over a network graph.
//!
//! Stage one serializes the scenario graph to text, asks a decision backend
//! (a remote language model, a replay fixture or the built-in heuristic) for
//! a visit order and repairs whatever comes back into a valid route. Stage
//! two runs a small graph network over the graph plus route-derived features
//! to allocate bandwidth and transmit power, trained under a joint loss
//! against the energy simulator.

pub mod allocator;
pub mod codec;
pub mod decision;
pub mod energy;
pub mod experiment;
pub mod graph;
pub mod trajectory;

pub use allocator::{AllocatorParams, ModelKind, TrainHyper, TrainRecord};
pub use codec::{parse_graph, parse_route_reply, serialize_graph, DecisionResponse, Diagnostic, GraphText};
pub use energy::{simulate, Allocation, EnergyModelConfig, EnergyReport};
pub use experiment::{calibrate_battery, run_gap_experiment, run_tasksize_sweep, ExperimentConfig};
pub use graph::{build_scenario, pairwise_distances, NetworkGraph, Node, NodeKind, ScenarioConfig, TaskSizes};
pub use trajectory::{exhaustive_optimal, two_opt_improve, Route};
