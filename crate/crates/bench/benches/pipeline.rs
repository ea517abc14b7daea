use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use uavgraph_core::allocator::{instance_gradient, prepare};
use uavgraph_core::trajectory::heuristic_route;
use uavgraph_core::{
    build_scenario, exhaustive_optimal, parse_graph, parse_route_reply, serialize_graph, Allocation, AllocatorParams,
    EnergyModelConfig, ModelKind, ScenarioConfig, TrainHyper,
};

fn routing(c: &mut Criterion) {
    let cfg = EnergyModelConfig::default();
    for n in [6, 8] {
        let graph = build_scenario(&ScenarioConfig { n_points: n, ..ScenarioConfig::default() }).unwrap();
        let alloc = Allocation::uniform(n, &cfg);
        c.bench_function(&format!("exhaustive_optimal/n{n}"), |b| {
            b.iter(|| exhaustive_optimal(black_box(&graph), &cfg, &alloc).unwrap())
        });
        c.bench_function(&format!("heuristic_route/n{n}"), |b| {
            b.iter(|| heuristic_route(black_box(&graph), &cfg, &alloc).unwrap())
        });
    }
}

fn codec(c: &mut Criterion) {
    let graph = build_scenario(&ScenarioConfig::default()).unwrap();
    let text = serialize_graph(&graph).canonical();
    c.bench_function("serialize_graph", |b| b.iter(|| serialize_graph(black_box(&graph)).canonical()));
    c.bench_function("parse_graph", |b| b.iter(|| parse_graph(black_box(&text)).unwrap()));
    let reply = "Sure. Route: A -> 3 -> 1 -> C -> 6 -> 2 -> 5 -> 4 -> A";
    c.bench_function("parse_route_reply", |b| b.iter(|| parse_route_reply(black_box(reply), &graph)));
}

fn allocator(c: &mut Criterion) {
    let cfg = EnergyModelConfig::default();
    let hyper = TrainHyper::default();
    let graph = build_scenario(&ScenarioConfig::default()).unwrap();
    let route = heuristic_route(&graph, &cfg, &Allocation::uniform(graph.monitor_count(), &cfg)).unwrap().route;
    for kind in ModelKind::ALL {
        let inst = prepare(&graph, &route, &cfg, kind, &hyper).unwrap();
        let params =
            AllocatorParams::init_uniform(kind, hyper.hidden, hyper.node2vec.dim, hyper.init_scale, hyper.seed);
        c.bench_function(&format!("forward_backward/{}", kind.as_str()), |b| {
            b.iter(|| instance_gradient(black_box(&params), &inst, &hyper, &cfg).unwrap())
        });
    }
}

criterion_group!(benches, routing, codec, allocator);
criterion_main!(benches);
