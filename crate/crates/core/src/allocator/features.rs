use ndarray::{Array2, Axis};

use super::{AllocatorError, ModelKind, TrainHyper};
use crate::energy::{simulate, Allocation, BatteryEventKind, EnergyModelConfig};
use crate::graph::{NetworkGraph, NodeKind};
use crate::trajectory::Route;

pub const FEATURE_DIM: usize = 8;

/// Everything the network reads for one (graph, route) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// One row per node, [`FEATURE_DIM`] columns.
    pub features: Array2<f64>,
    /// Row-normalized aggregation weights with a zero diagonal.
    pub neighbor_weights: Array2<f64>,
    /// Row of each monitoring point, in allocation order.
    pub monitor_rows: Vec<usize>,
    /// Fixed per-node embedding, used only by the node2vec encoder.
    pub embedding: Option<Array2<f64>>,
}

impl ModelInput {
    pub fn node_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn check(&self, kind: ModelKind) -> Result<(), AllocatorError> {
        let v = self.features.nrows();
        if self.features.ncols() != FEATURE_DIM {
            return Err(AllocatorError::Shape(format!("{} feature columns", self.features.ncols())));
        }
        if self.neighbor_weights.dim() != (v, v) {
            return Err(AllocatorError::Shape(format!(
                "neighbor weights {:?} for {v} nodes",
                self.neighbor_weights.dim()
            )));
        }
        if self.monitor_rows.is_empty() || self.monitor_rows.iter().any(|&r| r >= v) {
            return Err(AllocatorError::Shape("monitor rows out of range".into()));
        }
        match (&self.embedding, kind) {
            (Some(e), ModelKind::Node2Vec) if e.nrows() == v => Ok(()),
            (None, ModelKind::Node2Vec) => Err(AllocatorError::Shape("node2vec encoder needs an embedding".into())),
            (Some(_), ModelKind::Node2Vec) => Err(AllocatorError::Shape("embedding row count".into())),
            _ => Ok(()),
        }
    }
}

/// Per-node features: position, task, role flags and the route-derived
/// columns (visit position, distance to next stop, battery on arrival).
/// Route-derived columns are zero for nodes that are not monitoring points.
pub fn encode_features(
    graph: &NetworkGraph,
    route: &Route,
    cfg: &EnergyModelConfig,
    task_scale_mb: f64,
) -> Result<Array2<f64>, AllocatorError> {
    let (w, h) = graph.area();
    let n = graph.monitor_count() as f64;
    let diameter = graph.diameter();
    let mut x = Array2::zeros((graph.len(), FEATURE_DIM));
    for node in graph.nodes() {
        let mut row = x.row_mut(node.id);
        row[0] = (node.x / w).clamp(0.0, 1.0);
        row[1] = (node.y / h).clamp(0.0, 1.0);
        row[3] = f64::from(u8::from(node.kind == NodeKind::Charge));
        row[4] = f64::from(u8::from(node.kind == NodeKind::Start));
        if node.kind == NodeKind::Monitor {
            row[2] = (node.task_mb / task_scale_mb).clamp(0.0, 1.0);
        }
    }

    let stops = route.stops(graph);
    for (pos, &v) in route.visit_order().iter().enumerate() {
        x[[v, 5]] = (pos + 1) as f64 / n;
    }
    for pair in stops.windows(2) {
        if graph.node(pair[0]).kind == NodeKind::Monitor {
            x[[pair[0], 6]] = (graph.distance(pair[0], pair[1]) / diameter).clamp(0.0, 1.0);
        }
    }

    let report = simulate(route, &Allocation::uniform(graph.monitor_count(), cfg), graph, cfg)?;
    for event in &report.trace {
        if event.kind == BatteryEventKind::Arrive && graph.node(event.node).kind == NodeKind::Monitor {
            x[[event.node, 7]] = (event.battery_j / cfg.battery_capacity_j).clamp(0.0, 1.0);
        }
    }
    Ok(x)
}

/// Aggregation weights `1 / (1 + d)` over all other nodes, normalized per row.
pub fn neighbor_weights(graph: &NetworkGraph) -> Array2<f64> {
    let v = graph.len();
    let mut a = Array2::from_shape_fn((v, v), |(i, j)| if i == j { 0.0 } else { 1.0 / (1.0 + graph.distance(i, j)) });
    for mut row in a.axis_iter_mut(Axis(0)) {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    a
}

/// Assembles the full network input, computing the node2vec embedding when
/// the encoder needs it.
pub fn build_input(
    graph: &NetworkGraph,
    route: &Route,
    cfg: &EnergyModelConfig,
    kind: ModelKind,
    hyper: &TrainHyper,
) -> Result<ModelInput, AllocatorError> {
    let embedding = match kind {
        ModelKind::Node2Vec => Some(super::node2vec::node2vec_embed(
            &super::node2vec::walk_graph(graph, route),
            &hyper.node2vec,
            hyper.seed,
        )),
        _ => None,
    };
    Ok(ModelInput {
        features: encode_features(graph, route, cfg, hyper.task_scale_mb)?,
        neighbor_weights: neighbor_weights(graph),
        monitor_rows: graph.monitors().to_vec(),
        embedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_scenario, Node, ScenarioConfig};
    use crate::trajectory::heuristic_route;

    fn seed42() -> (NetworkGraph, Route, EnergyModelConfig) {
        let g = build_scenario(&ScenarioConfig::default()).unwrap();
        let cfg = EnergyModelConfig::default();
        let r = heuristic_route(&g, &cfg, &Allocation::uniform(g.monitor_count(), &cfg)).unwrap().route;
        (g, r, cfg)
    }

    #[test]
    fn entries_in_unit_interval_and_zero_off_monitors() {
        let (g, r, cfg) = seed42();
        let x = encode_features(&g, &r, &cfg, 40.0).unwrap();
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        for id in [g.start(), g.charge()] {
            for c in 5..FEATURE_DIM {
                assert_eq!(x[[id, c]], 0.0);
            }
        }
        assert_eq!(x[[g.start(), 4]], 1.0);
        assert_eq!(x[[g.charge(), 3]], 1.0);
    }

    #[test]
    fn first_visit_has_position_one_over_n() {
        let (g, r, cfg) = seed42();
        let x = encode_features(&g, &r, &cfg, 40.0).unwrap();
        assert_eq!(x[[r.visit_order()[0], 5]], 1.0 / g.monitor_count() as f64);
        assert_eq!(x[[*r.visit_order().last().unwrap(), 5]], 1.0);
    }

    #[test]
    fn arrival_battery_decreases_until_charge() {
        let (g, r, cfg) = seed42();
        let x = encode_features(&g, &r, &cfg, 40.0).unwrap();
        let before = &r.visit_order()[..r.charge_slot()];
        for pair in before.windows(2) {
            assert!(x[[pair[1], 7]] < x[[pair[0], 7]]);
        }
        let after = &r.visit_order()[r.charge_slot()..];
        for pair in after.windows(2) {
            assert!(x[[pair[1], 7]] < x[[pair[0], 7]]);
        }
    }

    #[test]
    fn symmetric_square_has_constant_task_column() {
        let nodes = vec![
            Node::new(0, NodeKind::Start, 0.0, 0.0, 0.0),
            Node::new(1, NodeKind::Monitor, 10.0, 10.0, 12.0),
            Node::new(2, NodeKind::Monitor, 90.0, 10.0, 12.0),
            Node::new(3, NodeKind::Monitor, 90.0, 90.0, 12.0),
            Node::new(4, NodeKind::Monitor, 10.0, 90.0, 12.0),
            Node::new(5, NodeKind::Charge, 50.0, 50.0, 0.0),
        ];
        let g = NetworkGraph::new(nodes, 100.0, 100.0).unwrap();
        let cfg = EnergyModelConfig::default();
        let r = Route::new(vec![1, 2, 3, 4], 2, &g).unwrap();
        let x = encode_features(&g, &r, &cfg, 40.0).unwrap();
        for &m in g.monitors() {
            assert_eq!(x[[m, 2]], 0.3);
        }
    }

    #[test]
    fn neighbor_rows_are_stochastic() {
        let (g, _, _) = seed42();
        let a = neighbor_weights(&g);
        for i in 0..g.len() {
            assert_eq!(a[[i, i]], 0.0);
            assert!((a.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }
}
