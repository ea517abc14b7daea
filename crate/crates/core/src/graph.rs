//! Scenario graph: typed nodes on a planar area with Euclidean edges.
//!
//! Node ids follow a fixed layout so that text replies can refer to nodes by
//! number: the start node is `0`, monitoring points are `1..=N`, the energy
//! supply station is `N + 1` and an optional operator is `N + 2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum separation between distinct nodes.
pub const MIN_SEPARATION_M: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("scenario needs at least one monitoring point")]
    NoMonitors,
    #[error("area dimensions must be positive, got {0} x {1}")]
    BadArea(f64, f64),
    #[error("task size for monitoring point {id} must be positive, got {value}")]
    BadTask { id: usize, value: f64 },
    #[error("expected {expected} task sizes, got {got}")]
    TaskCount { expected: usize, got: usize },
    #[error("expected {expected} monitor positions, got {got}")]
    PositionCount { expected: usize, got: usize },
    #[error("nodes {a} and {b} are closer than {MIN_SEPARATION_M} m (duplicate position)")]
    DuplicatePosition { a: usize, b: usize },
    #[error("node {id} at ({x}, {y}) lies outside the {width} x {height} m area")]
    OutOfArea { id: usize, x: f64, y: f64, width: f64, height: f64 },
    #[error("node ids must be 0..{expected} without gaps, found id {found}")]
    BadIds { expected: usize, found: usize },
    #[error("graph layout invalid: {0}")]
    Layout(String),
    #[error("node {id}: {reason}")]
    BadNode { id: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    Monitor,
    Charge,
    Operator,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Start => "start",
            NodeKind::Monitor => "monitor",
            NodeKind::Charge => "charge",
            NodeKind::Operator => "operator",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "start" => Some(NodeKind::Start),
            "monitor" => Some(NodeKind::Monitor),
            "charge" => Some(NodeKind::Charge),
            "operator" => Some(NodeKind::Operator),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    /// Megabytes to collect; zero for every non-monitor node.
    pub task_mb: f64,
}

impl Node {
    pub fn new(id: usize, kind: NodeKind, x: f64, y: f64, task_mb: f64) -> Self {
        Self { id, kind, x, y, task_mb }
    }

    pub fn distance_to(&self, other: &Node) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Dense symmetric matrix of pairwise distances, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.n..(a + 1) * self.n]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// The scenario graph. Immutable after construction; nodes are kept sorted
/// by id and ids are contiguous from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    width: f64,
    height: f64,
    distances: DistanceMatrix,
    monitors: Vec<usize>,
    start: usize,
    charge: usize,
}

impl NetworkGraph {
    /// Validates the layout and builds the graph. Node order in `nodes` does
    /// not matter.
    pub fn new(mut nodes: Vec<Node>, width: f64, height: f64) -> Result<Self, GraphError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(GraphError::BadArea(width, height));
        }
        nodes.sort_by_key(|n| n.id);
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::BadIds { expected: nodes.len(), found: node.id });
            }
            if !(node.x.is_finite() && node.y.is_finite())
                || node.x < 0.0
                || node.y < 0.0
                || node.x > width
                || node.y > height
            {
                return Err(GraphError::OutOfArea { id: node.id, x: node.x, y: node.y, width, height });
            }
            match node.kind {
                NodeKind::Monitor if !(node.task_mb > 0.0 && node.task_mb.is_finite()) => {
                    return Err(GraphError::BadTask { id: node.id, value: node.task_mb });
                }
                NodeKind::Start | NodeKind::Charge | NodeKind::Operator if node.task_mb != 0.0 => {
                    return Err(GraphError::BadNode {
                        id: node.id,
                        reason: format!("{} node carries a task of {} MB", node.kind.as_str(), node.task_mb),
                    });
                }
                _ => {}
            }
        }

        let of_kind = |k: NodeKind| nodes.iter().filter(|n| n.kind == k).map(|n| n.id).collect::<Vec<_>>();
        let starts = of_kind(NodeKind::Start);
        let charges = of_kind(NodeKind::Charge);
        let operators = of_kind(NodeKind::Operator);
        let monitors = of_kind(NodeKind::Monitor);
        if monitors.is_empty() {
            return Err(GraphError::NoMonitors);
        }
        let n = monitors.len();
        if starts != [0] {
            return Err(GraphError::Layout(format!("expected the single start node to have id 0, found {starts:?}")));
        }
        if monitors != (1..=n).collect::<Vec<_>>() {
            return Err(GraphError::Layout(format!("monitor ids must be 1..={n}, found {monitors:?}")));
        }
        if charges != [n + 1] {
            return Err(GraphError::Layout(format!(
                "expected the single charge node to have id {}, found {charges:?}",
                n + 1
            )));
        }
        if operators.len() > 1 || operators.iter().any(|&id| id != n + 2) {
            return Err(GraphError::Layout(format!(
                "expected at most one operator node with id {}, found {operators:?}",
                n + 2
            )));
        }

        // Monitors must be distinct from each other and from the start and
        // charge nodes. Start and charge may share a site; the operator is
        // not part of the tour.
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                let (na, nb) = (&nodes[a], &nodes[b]);
                let checked = na.kind == NodeKind::Monitor || nb.kind == NodeKind::Monitor;
                let exempt = na.kind == NodeKind::Operator || nb.kind == NodeKind::Operator;
                if checked && !exempt && na.distance_to(nb) < MIN_SEPARATION_M {
                    return Err(GraphError::DuplicatePosition { a: na.id, b: nb.id });
                }
            }
        }

        let len = nodes.len();
        let mut data = vec![0.0; len * len];
        for a in 0..len {
            for b in (a + 1)..len {
                let d = nodes[a].distance_to(&nodes[b]);
                data[a * len + b] = d;
                data[b * len + a] = d;
            }
        }
        Ok(Self { start: 0, charge: n + 1, monitors, distances: DistanceMatrix { n: len, data }, nodes, width, height })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn diameter(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Monitoring point ids in ascending order.
    pub fn monitors(&self) -> &[usize] {
        &self.monitors
    }

    pub fn monitor_count(&self) -> usize {
        self.monitors.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn charge(&self) -> usize {
        self.charge
    }

    pub fn operator(&self) -> Option<usize> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Operator).map(|n| n.id)
    }

    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.distances.get(a, b)
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.distances
    }

    pub fn max_task_mb(&self) -> f64 {
        self.monitors.iter().map(|&m| self.nodes[m].task_mb).fold(0.0, f64::max)
    }

    /// Copy of this graph with every monitor's task replaced.
    pub fn with_uniform_tasks(&self, task_mb: f64) -> Result<Self, GraphError> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n.kind {
                NodeKind::Monitor => Node { task_mb, ..*n },
                _ => *n,
            })
            .collect();
        Self::new(nodes, self.width, self.height)
    }

    /// Copy of this graph with all coordinates and the area multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GraphError> {
        let nodes = self.nodes.iter().map(|n| Node { x: n.x * factor, y: n.y * factor, ..*n }).collect();
        Self::new(nodes, self.width * factor, self.height * factor)
    }
}

/// Full distance matrix of a graph.
pub fn pairwise_distances(graph: &NetworkGraph) -> DistanceMatrix {
    graph.distances.clone()
}

/// Task sizes in a config: one value for every point, or one per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskSizes {
    Uniform(f64),
    PerPoint(Vec<f64>),
}

impl Default for TaskSizes {
    fn default() -> Self {
        TaskSizes::Uniform(10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_points: usize,
    /// `[width, height]` in meters.
    pub area_m: [f64; 2],
    pub task_sizes_mb: TaskSizes,
    pub seed: u64,
    pub start: Option<[f64; 2]>,
    /// Defaults to the center of the area.
    pub charge: Option<[f64; 2]>,
    pub operator: Option<[f64; 2]>,
    pub monitors: Option<Vec<[f64; 2]>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_points: 6,
            area_m: [400.0, 400.0],
            task_sizes_mb: TaskSizes::default(),
            seed: 42,
            start: None,
            charge: None,
            operator: None,
            monitors: None,
        }
    }
}

fn quantize(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Builds a scenario graph. Randomly placed nodes are drawn uniformly from
/// the area with a seeded generator and redrawn if they land within
/// [`MIN_SEPARATION_M`] of an earlier node; explicit positions are never moved.
/// All coordinates are quantized to 0.01 m.
pub fn build_scenario(config: &ScenarioConfig) -> Result<NetworkGraph, GraphError> {
    let n = config.n_points;
    if n == 0 {
        return Err(GraphError::NoMonitors);
    }
    let [width, height] = config.area_m;
    if !(width > 0.0 && height > 0.0) {
        return Err(GraphError::BadArea(width, height));
    }
    let tasks = match &config.task_sizes_mb {
        TaskSizes::Uniform(t) => vec![*t; n],
        TaskSizes::PerPoint(v) if v.len() == n => v.clone(),
        TaskSizes::PerPoint(v) => return Err(GraphError::TaskCount { expected: n, got: v.len() }),
    };
    for (i, &t) in tasks.iter().enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(GraphError::BadTask { id: i + 1, value: t });
        }
    }
    if let Some(m) = &config.monitors {
        if m.len() != n {
            return Err(GraphError::PositionCount { expected: n, got: m.len() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut placed: Vec<(f64, f64)> = Vec::with_capacity(n + 2);
    let draw = |rng: &mut ChaCha8Rng, placed: &[(f64, f64)]| -> (f64, f64) {
        loop {
            let p = (quantize(rng.gen_range(0.0..=width)), quantize(rng.gen_range(0.0..=height)));
            if placed.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= MIN_SEPARATION_M) {
                return p;
            }
        }
    };

    let start = match config.start {
        Some([x, y]) => (quantize(x), quantize(y)),
        None => draw(&mut rng, &placed),
    };
    placed.push(start);
    let charge = match config.charge {
        Some([x, y]) => (quantize(x), quantize(y)),
        None => (quantize(width / 2.0), quantize(height / 2.0)),
    };
    placed.push(charge);

    let mut nodes = vec![
        Node::new(0, NodeKind::Start, start.0, start.1, 0.0),
        Node::new(n + 1, NodeKind::Charge, charge.0, charge.1, 0.0),
    ];
    for i in 0..n {
        let p = match &config.monitors {
            Some(m) => (quantize(m[i][0]), quantize(m[i][1])),
            None => draw(&mut rng, &placed),
        };
        placed.push(p);
        nodes.push(Node::new(i + 1, NodeKind::Monitor, p.0, p.1, tasks[i]));
    }
    if let Some([x, y]) = config.operator {
        nodes.push(Node::new(n + 2, NodeKind::Operator, quantize(x), quantize(y), 0.0));
    }
    NetworkGraph::new(nodes, width, height)
}
