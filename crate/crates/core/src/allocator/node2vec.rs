use ndarray::{Array1, Array2, Axis};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::NetworkGraph;
use crate::trajectory::Route;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Node2VecHyper {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub dim: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Nearest neighbors linked to each node in the walk graph.
    pub nearest: usize,
}

impl Default for Node2VecHyper {
    fn default() -> Self {
        Self {
            walks_per_node: 20,
            walk_length: 10,
            window: 5,
            dim: 16,
            p: 1.0,
            q: 1.0,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            nearest: 2,
        }
    }
}

impl Node2VecHyper {
    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 || self.walk_length < 2 || self.window == 0 || self.walks_per_node == 0 {
            return Err("node2vec dim, walk_length, window and walks_per_node must be positive".into());
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err("node2vec p and q must be positive".into());
        }
        Ok(())
    }
}

/// Sorted adjacency lists: the route cycle plus links to each node's
/// `nearest` closest nodes.
pub fn walk_graph(graph: &NetworkGraph, route: &Route) -> Vec<Vec<usize>> {
    walk_graph_with(graph, route, Node2VecHyper::default().nearest)
}

pub fn walk_graph_with(graph: &NetworkGraph, route: &Route, nearest: usize) -> Vec<Vec<usize>> {
    let v = graph.len();
    let mut adj = vec![Vec::new(); v];
    let mut link = |a: usize, b: usize| {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    for pair in route.stops(graph).windows(2) {
        link(pair[0], pair[1]);
    }
    for i in 0..v {
        let mut others: Vec<usize> = (0..v).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| graph.distance(i, a).total_cmp(&graph.distance(i, b)).then(a.cmp(&b)));
        for &j in others.iter().take(nearest) {
            link(i, j);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn walk(adj: &[Vec<usize>], start: usize, hyper: &Node2VecHyper, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut path = vec![start];
    while path.len() < hyper.walk_length {
        let cur = *path.last().expect("non-empty walk");
        let nbrs = &adj[cur];
        if nbrs.is_empty() {
            break;
        }
        let next = match path.len() {
            1 => nbrs[rng.gen_range(0..nbrs.len())],
            k => {
                let prev = path[k - 2];
                let weights: Vec<f64> = nbrs
                    .iter()
                    .map(|&x| {
                        if x == prev {
                            1.0 / hyper.p
                        } else if adj[prev].binary_search(&x).is_ok() {
                            1.0
                        } else {
                            1.0 / hyper.q
                        }
                    })
                    .collect();
                nbrs[WeightedIndex::new(&weights).expect("positive weights").sample(rng)]
            }
        };
        path.push(next);
    }
    path
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Skip-gram with negative sampling over biased random walks. Each row of
/// the result is the sum of a node's input and context vectors, scaled to
/// unit length.
pub fn node2vec_embed(adj: &[Vec<usize>], hyper: &Node2VecHyper, seed: u64) -> Array2<f64> {
    let v = adj.len();
    let dim = hyper.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut walks = Vec::with_capacity(v * hyper.walks_per_node);
    for _ in 0..hyper.walks_per_node {
        for start in 0..v {
            walks.push(walk(adj, start, hyper, &mut rng));
        }
    }

    let mut counts = vec![0.0f64; v];
    for w in &walks {
        for &n in w {
            counts[n] += 1.0;
        }
    }
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75) + 1e-12)).expect("non-empty graph");

    let half = 0.5 / dim as f64;
    let mut input = Array2::from_shape_fn((v, dim), |_| rng.gen_range(-half..half));
    let mut context = Array2::<f64>::zeros((v, dim));
    let total_steps = (hyper.epochs * walks.len()).max(1);
    let mut step = 0;
    for _ in 0..hyper.epochs {
        for w in &walks {
            let lr = hyper.learning_rate * (1.0 - step as f64 / total_steps as f64).max(1e-4);
            step += 1;
            for (i, &center) in w.iter().enumerate() {
                let lo = i.saturating_sub(hyper.window);
                let hi = (i + hyper.window + 1).min(w.len());
                for (j, &ctx) in w.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let mut grad_in = Array1::<f64>::zeros(dim);
                    let targets =
                        std::iter::once((ctx, 1.0)).chain((0..hyper.negatives).map(|_| (noise.sample(&mut rng), 0.0)));
                    for (target, label) in targets {
                        if label == 0.0 && target == ctx {
                            continue;
                        }
                        let score = sigmoid(input.row(center).dot(&context.row(target)));
                        let g = lr * (label - score);
                        grad_in.scaled_add(g, &context.row(target));
                        let in_row = input.row(center).to_owned();
                        context.row_mut(target).scaled_add(g, &in_row);
                    }
                    input.row_mut(center).scaled_add(1.0, &grad_in);
                }
            }
        }
    }

    let mut emb = input + context;
    for mut row in emb.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    emb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_scenario, Node, NodeKind, ScenarioConfig};

    fn path(n: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect()
    }

    #[test]
    fn shape_is_nodes_by_dim() {
        for n in [3, 5, 9] {
            let e = node2vec_embed(&path(n), &Node2VecHyper::default(), 1);
            assert_eq!(e.dim(), (n, 16));
        }
    }

    #[test]
    fn path_neighbors_are_closer_than_far_nodes() {
        let hyper = Node2VecHyper { window: 1, ..Node2VecHyper::default() };
        let e = node2vec_embed(&path(5), &hyper, 42);
        let dot = |a: usize, b: usize| e.row(a).dot(&e.row(b));
        let adjacent = [(0, 1), (1, 2), (2, 3), (3, 4)].map(|(a, b)| dot(a, b));
        let far = [(0, 3), (0, 4), (1, 4)].map(|(a, b)| dot(a, b));
        let min_adj = adjacent.iter().copied().fold(f64::INFINITY, f64::min);
        let max_far = far.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(min_adj > max_far, "adjacent {adjacent:?} far {far:?}");
    }

    #[test]
    fn translated_layout_gives_identical_embedding() {
        let g = build_scenario(&ScenarioConfig::default()).unwrap();
        let shifted: Vec<Node> =
            g.nodes().iter().map(|n| Node { x: n.x * 0.5 + 7.0, y: n.y * 0.5 + 3.0, ..*n }).collect();
        let (w, h) = g.area();
        let g2 = NetworkGraph::new(shifted, w, h).unwrap();
        let r = Route::new(g.monitors().to_vec(), 3, &g).unwrap();
        let a = node2vec_embed(&walk_graph(&g, &r), &Node2VecHyper::default(), 42);
        let b = node2vec_embed(&walk_graph(&g2, &r), &Node2VecHyper::default(), 42);
        assert_eq!(a, b);
    }

    #[test]
    fn walk_graph_contains_route_cycle() {
        let g = build_scenario(&ScenarioConfig::default()).unwrap();
        let r = Route::new(g.monitors().to_vec(), 2, &g).unwrap();
        let adj = walk_graph(&g, &r);
        for pair in r.stops(&g).windows(2) {
            assert!(adj[pair[0]].contains(&pair[1]));
        }
        assert!(adj.iter().all(|l| l.len() >= 2));
        assert_eq!(g.node(g.charge()).kind, NodeKind::Charge);
    }
}
