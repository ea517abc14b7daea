//! Tour construction over the monitoring points with a single charging stop.
//!
//! The exhaustive search here is the ground truth for route quality at small
//! N; the nearest-neighbor + 2-opt heuristic is what the offline decision
//! backend uses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{collection_table, Allocation, EnergyError, EnergyModelConfig};
use crate::graph::NetworkGraph;

/// Largest instance the exhaustive search accepts.
pub const MAX_EXHAUSTIVE_POINTS: usize = 9;

/// Minimum energy change, in joules, that counts as an improvement.
pub const IMPROVEMENT_EPS_J: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("exhaustive search supports at most {MAX_EXHAUSTIVE_POINTS} monitoring points, got {0}")]
    TooLarge(usize),
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// A visit order over every monitoring point plus one charging stop.
///
/// `charge_slot` counts the visits made before the detour to the station:
/// `0` charges before the first visit, `N` after the last one. The tour
/// implicitly starts and ends at the start node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Route {
    visit_order: Vec<usize>,
    charge_slot: usize,
}

impl Route {
    pub fn new(visit_order: Vec<usize>, charge_slot: usize, graph: &NetworkGraph) -> Result<Self, TrajectoryError> {
        let n = graph.monitor_count();
        if visit_order.len() != n {
            return Err(TrajectoryError::InvalidRoute(format!(
                "visits {} points, graph has {n} monitoring points",
                visit_order.len()
            )));
        }
        let mut seen = vec![false; graph.len()];
        for &v in &visit_order {
            if !graph.monitors().contains(&v) {
                return Err(TrajectoryError::InvalidRoute(format!("node {v} is not a monitoring point")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(TrajectoryError::InvalidRoute(format!("node {v} visited twice")));
            }
        }
        if charge_slot > n {
            return Err(TrajectoryError::InvalidRoute(format!("charge slot {charge_slot} exceeds {n}")));
        }
        Ok(Self { visit_order, charge_slot })
    }

    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }

    pub fn charge_slot(&self) -> usize {
        self.charge_slot
    }

    /// Index of the visit after which the UAV charges, or `None` when it
    /// charges before the first visit.
    pub fn charge_after(&self) -> Option<usize> {
        self.charge_slot.checked_sub(1)
    }

    /// Node sequence flown, start and end included.
    pub fn stops(&self, graph: &NetworkGraph) -> Vec<usize> {
        let mut stops = Vec::with_capacity(self.visit_order.len() + 3);
        stops.push(graph.start());
        stops.extend_from_slice(&self.visit_order[..self.charge_slot]);
        stops.push(graph.charge());
        stops.extend_from_slice(&self.visit_order[self.charge_slot..]);
        stops.push(graph.start());
        stops
    }

    pub fn length(&self, graph: &NetworkGraph) -> f64 {
        route_length(self, graph)
    }

    /// The same tour flown backwards, with the charging stop kept between the
    /// same two nodes.
    pub fn reversed(&self) -> Route {
        let mut visit_order = self.visit_order.clone();
        visit_order.reverse();
        Route { charge_slot: visit_order.len() - self.charge_slot, visit_order }
    }
}

pub fn route_length(route: &Route, graph: &NetworkGraph) -> f64 {
    route.stops(graph).windows(2).map(|w| graph.distance(w[0], w[1])).sum()
}

/// Energy outcome of a candidate route, computed without building a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteScore {
    /// Energy drawn from departure to arrival at the station.
    pub before_charge_j: f64,
    /// Energy drawn from the station back to the start.
    pub after_charge_j: f64,
    pub consumed_j: f64,
    pub remaining_j: f64,
    pub feasible: bool,
}

impl RouteScore {
    pub fn deficit_j(&self) -> f64 {
        (-self.remaining_j).max(0.0)
    }

    /// Battery capacity this route needs to stay feasible.
    pub fn required_capacity_j(&self) -> f64 {
        self.before_charge_j.max(self.after_charge_j)
    }

    /// Feasible routes beat infeasible ones; feasible routes compare by
    /// consumption and infeasible ones by deficit.
    pub fn improves_on(&self, other: &RouteScore) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.consumed_j < other.consumed_j - IMPROVEMENT_EPS_J,
            (false, false) => self.deficit_j() < other.deficit_j() - IMPROVEMENT_EPS_J,
        }
    }
}

/// Precomputed per-node costs for fast route scoring under a fixed allocation.
#[derive(Debug, Clone)]
pub struct RouteCosts<'g> {
    graph: &'g NetworkGraph,
    j_per_m: f64,
    collection: Vec<f64>,
    capacity: f64,
}

impl<'g> RouteCosts<'g> {
    pub fn new(graph: &'g NetworkGraph, cfg: &EnergyModelConfig, alloc: &Allocation) -> Result<Self, EnergyError> {
        Ok(Self {
            graph,
            j_per_m: cfg.flight_j_per_m(),
            collection: collection_table(graph, alloc, cfg)?,
            capacity: cfg.battery_capacity_j,
        })
    }

    pub fn score(&self, order: &[usize], slot: usize) -> RouteScore {
        let g = self.graph;
        let mut prev = g.start();
        let mut first = 0.0;
        for &v in &order[..slot] {
            first += self.j_per_m * g.distance(prev, v) + self.collection[v];
            prev = v;
        }
        first += self.j_per_m * g.distance(prev, g.charge());
        prev = g.charge();
        let mut second = 0.0;
        for &v in &order[slot..] {
            second += self.j_per_m * g.distance(prev, v) + self.collection[v];
            prev = v;
        }
        second += self.j_per_m * g.distance(prev, g.start());

        let cap = self.capacity;
        let remaining = if first <= cap { cap - second } else { cap - first - second };
        RouteScore {
            before_charge_j: first,
            after_charge_j: second,
            consumed_j: first + second,
            remaining_j: remaining,
            feasible: first <= cap && second <= cap,
        }
    }

    pub fn score_route(&self, route: &Route) -> RouteScore {
        self.score(&route.visit_order, route.charge_slot)
    }

    fn best_slot(&self, order: &[usize]) -> (usize, RouteScore) {
        let mut best = (0, self.score(order, 0));
        for slot in 1..=order.len() {
            let s = self.score(order, slot);
            if s.improves_on(&best.1) {
                best = (slot, s);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRoute {
    pub route: Route,
    pub score: RouteScore,
}

/// Places the charging stop at the best of the `N + 1` positions. Among
/// equally good positions the earliest wins.
pub fn best_charge_insertion(
    visit_order: &[usize],
    graph: &NetworkGraph,
    cfg: &EnergyModelConfig,
    alloc: &Allocation,
) -> Result<ScoredRoute, TrajectoryError> {
    let costs = RouteCosts::new(graph, cfg, alloc)?;
    Route::new(visit_order.to_vec(), 0, graph)?;
    let (slot, score) = costs.best_slot(visit_order);
    Ok(ScoredRoute { route: Route { visit_order: visit_order.to_vec(), charge_slot: slot }, score })
}

/// Greedy order: from the start node, always fly to the closest unvisited
/// monitoring point (lowest id on ties).
pub fn nearest_neighbor_order(graph: &NetworkGraph) -> Vec<usize> {
    nearest_neighbor_extend(graph, graph.start(), &[])
}

/// Visits every monitoring point not in `visited` in nearest-neighbor
/// order, starting from `from`.
pub fn nearest_neighbor_extend(graph: &NetworkGraph, from: usize, visited: &[usize]) -> Vec<usize> {
    let mut remaining: Vec<usize> = graph.monitors().iter().copied().filter(|m| !visited.contains(m)).collect();
    let mut order = Vec::with_capacity(remaining.len());
    let mut at = from;
    while !remaining.is_empty() {
        let (idx, _) = remaining.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &m)| {
            let d = graph.distance(at, m);
            if d < best.1 {
                (i, d)
            } else {
                best
            }
        });
        at = remaining.remove(idx);
        order.push(at);
    }
    order
}

/// Best-improvement local search over segment reversals and charging stop
/// moves. The charging stop takes part in reversals like any other stop, so
/// every reversal replaces exactly two legs of the tour. Stops when no move
/// improves consumed energy by more than [`IMPROVEMENT_EPS_J`] (or, while
/// infeasible, the deficit).
pub fn two_opt_improve(
    route: &Route,
    graph: &NetworkGraph,
    cfg: &EnergyModelConfig,
    alloc: &Allocation,
) -> Result<ScoredRoute, TrajectoryError> {
    let costs = RouteCosts::new(graph, cfg, alloc)?;
    let charge = graph.charge();
    // Interior stops between the two visits to the start, charge stop included.
    let mut interior = route.stops(graph)[1..=route.visit_order.len() + 1].to_vec();
    let split = |stops: &[usize]| -> (Vec<usize>, usize) {
        let slot = stops.iter().position(|&v| v == charge).expect("charge stop present");
        (stops.iter().copied().filter(|&v| v != charge).collect(), slot)
    };
    let (mut order, mut slot) = split(&interior);
    let mut current = costs.score(&order, slot);
    let m = interior.len();
    let mut scratch = interior.clone();
    loop {
        let mut best: Option<(Move, RouteScore)> = None;
        let consider = |mv: Move, s: RouteScore, best: &mut Option<(Move, RouteScore)>| {
            let bar = best.as_ref().map_or(&current, |b| &b.1);
            if s.improves_on(bar) {
                *best = Some((mv, s));
            }
        };
        for i in 0..m {
            for j in (i + 1)..m {
                scratch.copy_from_slice(&interior);
                scratch[i..=j].reverse();
                let (o, s) = split(&scratch);
                consider(Move::Reverse(i, j), costs.score(&o, s), &mut best);
            }
        }
        for s in 0..m {
            if s != slot {
                consider(Move::Recharge(s), costs.score(&order, s), &mut best);
            }
        }
        match best {
            Some((Move::Reverse(i, j), score)) => {
                interior[i..=j].reverse();
                current = score;
            }
            Some((Move::Recharge(s), score)) => {
                interior.retain(|&v| v != charge);
                interior.insert(s, charge);
                current = score;
            }
            None => break,
        }
        (order, slot) = split(&interior);
    }
    Ok(ScoredRoute { route: Route { visit_order: order, charge_slot: slot }, score: current })
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Reverse(usize, usize),
    Recharge(usize),
}

/// Nearest-neighbor construction, best charging stop, then 2-opt.
pub fn heuristic_route(
    graph: &NetworkGraph,
    cfg: &EnergyModelConfig,
    alloc: &Allocation,
) -> Result<ScoredRoute, TrajectoryError> {
    let start = best_charge_insertion(&nearest_neighbor_order(graph), graph, cfg, alloc)?;
    two_opt_improve(&start.route, graph, cfg, alloc)
}

/// Rearranges `v` into the next lexicographic permutation; false once the
/// last permutation has been reached.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Calls `f` on every visit order in lexicographic order.
fn for_each_order(graph: &NetworkGraph, mut f: impl FnMut(&[usize])) -> Result<(), TrajectoryError> {
    let n = graph.monitor_count();
    if n > MAX_EXHAUSTIVE_POINTS {
        return Err(TrajectoryError::TooLarge(n));
    }
    let mut order = graph.monitors().to_vec();
    loop {
        f(&order);
        if !next_permutation(&mut order) {
            return Ok(());
        }
    }
}

/// Enumerates all `N! * (N + 1)` routes and returns the best one: the
/// feasible route with least consumed energy, or the least-deficit route if
/// none is feasible. Ties go to the lexicographically smallest visit order,
/// then the earliest charging slot.
pub fn exhaustive_optimal(
    graph: &NetworkGraph,
    cfg: &EnergyModelConfig,
    alloc: &Allocation,
) -> Result<ScoredRoute, TrajectoryError> {
    let costs = RouteCosts::new(graph, cfg, alloc)?;
    let mut best: Option<(Vec<usize>, usize, RouteScore)> = None;
    for_each_order(graph, |order| {
        for slot in 0..=order.len() {
            let s = costs.score(order, slot);
            if best.as_ref().is_none_or(|b| s.improves_on(&b.2)) {
                best = Some((order.to_vec(), slot, s));
            }
        }
    })?;
    let (visit_order, charge_slot, score) = best.expect("at least one route");
    Ok(ScoredRoute { route: Route { visit_order, charge_slot }, score })
}

/// Smallest battery capacity for which some route is feasible, with the
/// route that attains it (same tie-break as [`exhaustive_optimal`]).
pub fn exhaustive_min_capacity(
    graph: &NetworkGraph,
    cfg: &EnergyModelConfig,
    alloc: &Allocation,
) -> Result<(Route, f64), TrajectoryError> {
    let costs = RouteCosts::new(graph, cfg, alloc)?;
    let mut best: Option<(Vec<usize>, usize, f64)> = None;
    for_each_order(graph, |order| {
        for slot in 0..=order.len() {
            let need = costs.score(order, slot).required_capacity_j();
            if best.as_ref().is_none_or(|b| need < b.2 - IMPROVEMENT_EPS_J) {
                best = Some((order.to_vec(), slot, need));
            }
        }
    })?;
    let (visit_order, charge_slot, need) = best.expect("at least one route");
    Ok((Route { visit_order, charge_slot }, need))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::simulate;
    use crate::graph::{build_scenario, Node, NodeKind, ScenarioConfig};

    fn seed42() -> NetworkGraph {
        build_scenario(&ScenarioConfig::default()).unwrap()
    }

    fn setup(g: &NetworkGraph) -> (EnergyModelConfig, Allocation) {
        let cfg = EnergyModelConfig::default();
        let alloc = Allocation::uniform(g.monitor_count(), &cfg);
        (cfg, alloc)
    }

    fn graph(points: &[(f64, f64)], start: (f64, f64), charge: (f64, f64)) -> NetworkGraph {
        let n = points.len();
        let mut nodes = vec![
            Node::new(0, NodeKind::Start, start.0, start.1, 0.0),
            Node::new(n + 1, NodeKind::Charge, charge.0, charge.1, 0.0),
        ];
        for (i, p) in points.iter().enumerate() {
            nodes.push(Node::new(i + 1, NodeKind::Monitor, p.0, p.1, 10.0));
        }
        NetworkGraph::new(nodes, 100.0, 100.0).unwrap()
    }

    #[test]
    fn two_opt_result_admits_no_improving_reversal() {
        for seed in 0..10 {
            let g = build_scenario(&ScenarioConfig { seed, ..ScenarioConfig::default() }).unwrap();
            let (cfg, alloc) = setup(&g);
            let costs = RouteCosts::new(&g, &cfg, &alloc).unwrap();
            let local = heuristic_route(&g, &cfg, &alloc).unwrap();
            let stops = local.route.stops(&g);
            let interior = &stops[1..stops.len() - 1];
            for i in 0..interior.len() {
                for j in (i + 1)..interior.len() {
                    let mut cand = interior.to_vec();
                    cand[i..=j].reverse();
                    let slot = cand.iter().position(|&v| v == g.charge()).unwrap();
                    cand.retain(|&v| v != g.charge());
                    assert!(!costs.score(&cand, slot).improves_on(&local.score), "seed {seed}: reversal {i}..={j}");
                }
            }
        }
    }

    #[test]
    fn route_validation() {
        let g = seed42();
        assert!(Route::new(vec![1, 2, 3, 4, 5, 6], 0, &g).is_ok());
        assert!(Route::new(vec![1, 2, 3, 4, 5], 0, &g).is_err());
        assert!(Route::new(vec![1, 1, 3, 4, 5, 6], 0, &g).is_err());
        assert!(Route::new(vec![0, 2, 3, 4, 5, 6], 0, &g).is_err());
        assert!(Route::new(vec![1, 2, 3, 4, 5, 6], 7, &g).is_err());
        let r = Route::new(vec![1, 2, 3, 4, 5, 6], 2, &g).unwrap();
        assert_eq!(r.charge_after(), Some(1));
        assert_eq!(r.stops(&g), vec![0, 1, 2, 7, 3, 4, 5, 6, 0]);
    }

    #[test]
    fn out_and_back_length() {
        let g = graph(&[(3.0, 4.0)], (0.0, 0.0), (0.0, 0.0));
        let r = Route::new(vec![1], 0, &g).unwrap();
        assert_eq!(r.length(&g), 10.0);
    }

    #[test]
    fn reversal_preserves_length() {
        let g = seed42();
        for slot in 0..=6 {
            let r = Route::new(vec![4, 2, 6, 1, 5, 3], slot, &g).unwrap();
            assert!((r.length(&g) - r.reversed().length(&g)).abs() < 1e-9);
        }
    }

    #[test]
    fn length_matches_leg_sum() {
        let g = seed42();
        let (cfg, alloc) = setup(&g);
        let h = heuristic_route(&g, &cfg, &alloc).unwrap();
        let stops = h.route.stops(&g);
        let mut by_hand = 0.0;
        for w in stops.windows(2) {
            let (a, b) = (g.node(w[0]), g.node(w[1]));
            by_hand += ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
        }
        assert!((h.route.length(&g) - by_hand).abs() < 1e-9);
    }

    #[test]
    fn score_agrees_with_simulation() {
        let g = seed42();
        for cap in [5_000.0, 20_000.0, 100_000.0] {
            let cfg = EnergyModelConfig { battery_capacity_j: cap, ..Default::default() };
            let alloc = Allocation::uniform(6, &cfg);
            let costs = RouteCosts::new(&g, &cfg, &alloc).unwrap();
            for slot in 0..=6 {
                let r = Route::new(vec![2, 5, 1, 6, 3, 4], slot, &g).unwrap();
                let s = costs.score_route(&r);
                let rep = simulate(&r, &alloc, &g, &cfg).unwrap();
                assert!((s.consumed_j - rep.consumed_j).abs() < 1e-6);
                assert!((s.remaining_j - rep.remaining_j).abs() < 1e-6);
                assert_eq!(s.feasible, rep.feasible);
            }
        }
    }

    #[test]
    fn singleton_is_trivially_optimal() {
        let g = build_scenario(&ScenarioConfig { n_points: 1, ..Default::default() }).unwrap();
        let (cfg, alloc) = setup(&g);
        let best = exhaustive_optimal(&g, &cfg, &alloc).unwrap();
        assert_eq!(best.route.visit_order(), &[1]);
    }

    #[test]
    fn exhaustive_rejects_large_instances() {
        let g = build_scenario(&ScenarioConfig { n_points: 10, ..Default::default() }).unwrap();
        let (cfg, alloc) = setup(&g);
        assert_eq!(exhaustive_optimal(&g, &cfg, &alloc), Err(TrajectoryError::TooLarge(10)));
    }

    #[test]
    fn exhaustive_beats_every_candidate() {
        let g = seed42();
        let (cfg, alloc) = setup(&g);
        let best = exhaustive_optimal(&g, &cfg, &alloc).unwrap();
        let costs = RouteCosts::new(&g, &cfg, &alloc).unwrap();
        let mut order = vec![1, 2, 3, 4, 5, 6];
        let mut count = 0;
        loop {
            for slot in 0..=6 {
                count += 1;
                let s = costs.score(&order, slot);
                assert!(!s.improves_on(&best.score));
                if best.score.feasible && s.feasible {
                    assert!(best.score.consumed_j <= s.consumed_j + 1e-9);
                }
            }
            if !next_permutation(&mut order) {
                break;
            }
        }
        assert_eq!(count, 720 * 7);
    }

    #[test]
    fn exhaustive_tie_break_is_lexicographic() {
        // A mirrored tour has the same energy; the smaller order wins.
        let g = seed42();
        let (cfg, alloc) = setup(&g);
        let best = exhaustive_optimal(&g, &cfg, &alloc).unwrap();
        let mirror = best.route.reversed();
        assert!(best.route.visit_order() <= mirror.visit_order());
    }

    #[test]
    fn two_opt_fixed_point_on_optimum() {
        let g = build_scenario(&ScenarioConfig { n_points: 3, ..Default::default() }).unwrap();
        let (cfg, alloc) = setup(&g);
        let best = exhaustive_optimal(&g, &cfg, &alloc).unwrap();
        let improved = two_opt_improve(&best.route, &g, &cfg, &alloc).unwrap();
        assert_eq!(improved.route, best.route);
    }

    #[test]
    fn two_opt_uncrosses_a_quadrilateral() {
        // Square corners visited 1 -> 3 -> 2 -> 4 cross each other.
        let g = graph(&[(10.0, 10.0), (90.0, 10.0), (90.0, 90.0), (10.0, 90.0)], (0.0, 0.0), (0.0, 0.0));
        let (cfg, alloc) = setup(&g);
        let crossed = Route::new(vec![1, 3, 2, 4], 0, &g).unwrap();
        let improved = two_opt_improve(&crossed, &g, &cfg, &alloc).unwrap();
        assert!(improved.route.length(&g) < crossed.length(&g) - 1.0);
    }

    #[test]
    fn two_opt_close_to_optimum_on_seed42() {
        let g = seed42();
        let (cfg, alloc) = setup(&g);
        let h = heuristic_route(&g, &cfg, &alloc).unwrap();
        let best = exhaustive_optimal(&g, &cfg, &alloc).unwrap();
        assert!(h.score.consumed_j <= 1.05 * best.score.consumed_j);
        assert!(best.score.consumed_j <= h.score.consumed_j + 1e-9);
    }

    #[test]
    fn zero_detour_charge_is_weakly_optimal() {
        let g = graph(&[(10.0, 50.0), (60.0, 80.0), (90.0, 20.0)], (5.0, 5.0), (5.0, 5.0));
        let (cfg, alloc) = setup(&g);
        let best = best_charge_insertion(&[1, 2, 3], &g, &cfg, &alloc).unwrap();
        assert_eq!(best.route.charge_slot(), 0);
    }

    #[test]
    fn infeasible_insertion_picks_least_deficit() {
        let g = seed42();
        let cfg = EnergyModelConfig { battery_capacity_j: 10.0, ..Default::default() };
        let alloc = Allocation::uniform(6, &cfg);
        let order = [3, 1, 4, 6, 2, 5];
        let best = best_charge_insertion(&order, &g, &cfg, &alloc).unwrap();
        assert!(!best.score.feasible);
        let costs = RouteCosts::new(&g, &cfg, &alloc).unwrap();
        let min_deficit = (0..=6).map(|s| costs.score(&order, s).deficit_j()).fold(f64::INFINITY, f64::min);
        assert_eq!(best.score.deficit_j(), min_deficit);
    }

    #[test]
    fn insertion_matches_brute_force() {
        let g = seed42();
        let (cfg, alloc) = setup(&g);
        let order = nearest_neighbor_order(&g);
        let best = best_charge_insertion(&order, &g, &cfg, &alloc).unwrap();
        // brute force straight from the simulator
        let mut sims: Vec<(usize, f64)> = (0..=6)
            .map(|s| {
                let r = Route::new(order.clone(), s, &g).unwrap();
                (s, simulate(&r, &alloc, &g, &cfg).unwrap().consumed_j)
            })
            .collect();
        sims.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        assert_eq!(best.route.charge_slot(), sims[0].0);
    }

    #[test]
    fn min_capacity_is_tight() {
        let g = seed42();
        let (cfg, alloc) = setup(&g);
        let (route, need) = exhaustive_min_capacity(&g, &cfg, &alloc).unwrap();
        let at = |cap: f64| {
            let c = EnergyModelConfig { battery_capacity_j: cap, ..cfg.clone() };
            exhaustive_optimal(&g, &c, &alloc).unwrap().score.feasible
        };
        assert!(at(need + 1e-6));
        assert!(!at(need - 1e-3));
        let c = EnergyModelConfig { battery_capacity_j: need + 1e-6, ..cfg.clone() };
        assert!(simulate(&route, &alloc, &g, &c).unwrap().feasible);
    }

    #[test]
    fn permutations_are_lexicographic() {
        let mut v = vec![1, 2, 3];
        let mut all = vec![v.clone()];
        while next_permutation(&mut v) {
            all.push(v.clone());
        }
        assert_eq!(all.len(), 6);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn oracle_le_local_search_le_input(seed in any::<u64>(), n in 2usize..7, cap in 2_000.0f64..60_000.0) {
                let g = build_scenario(&ScenarioConfig { seed, n_points: n, ..Default::default() }).unwrap();
                let cfg = EnergyModelConfig { battery_capacity_j: cap, ..Default::default() };
                let alloc = Allocation::uniform(n, &cfg);
                let costs = RouteCosts::new(&g, &cfg, &alloc).unwrap();
                let input = Route::new(g.monitors().iter().rev().copied().collect(), n / 2, &g).unwrap();
                let local = two_opt_improve(&input, &g, &cfg, &alloc).unwrap();
                let best = exhaustive_optimal(&g, &cfg, &alloc).unwrap();
                prop_assert!(!costs.score_route(&input).improves_on(&local.score));
                prop_assert!(!local.score.improves_on(&best.score));
                prop_assert!(Route::new(local.route.visit_order().to_vec(), local.route.charge_slot(), &g).is_ok());
                let again = two_opt_improve(&input, &g, &cfg, &alloc).unwrap();
                prop_assert_eq!(again.route, local.route);
            }
        }
    }
}
