use proptest::prelude::*;

use uavgraph_core::allocator::{encode_features, evaluate, forward, prepare, FEATURE_DIM};
use uavgraph_core::trajectory::heuristic_route;
use uavgraph_core::{
    build_scenario, simulate, Allocation, AllocatorParams, EnergyModelConfig, ModelKind, NetworkGraph, Route,
    ScenarioConfig, TaskSizes, TrainHyper,
};

fn kind() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::Gnn), Just(ModelKind::Node2Vec), Just(ModelKind::Gat)]
}

fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    (1usize..=7, any::<u64>(), 100.0..800.0f64, 100.0..800.0f64)
        .prop_flat_map(|(n, seed, w, h)| {
            (Just(n), Just(seed), Just(w), Just(h), prop::collection::vec(0.5..40.0f64, n))
        })
        .prop_map(|(n, seed, w, h, tasks)| ScenarioConfig {
            n_points: n,
            area_m: [w, h],
            task_sizes_mb: TaskSizes::PerPoint(tasks),
            seed,
            ..ScenarioConfig::default()
        })
}

fn routed(scen: &ScenarioConfig, cfg: &EnergyModelConfig) -> (NetworkGraph, Route) {
    let g = build_scenario(scen).unwrap();
    let r = heuristic_route(&g, cfg, &Allocation::uniform(g.monitor_count(), cfg)).unwrap().route;
    (g, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn features_stay_in_unit_interval(scen in scenario(), capacity in 2_000.0..60_000.0f64) {
        let cfg = EnergyModelConfig { battery_capacity_j: capacity, ..EnergyModelConfig::default() };
        let (g, r) = routed(&scen, &cfg);
        let x = encode_features(&g, &r, &cfg, 40.0).unwrap();
        prop_assert_eq!(x.dim(), (g.len(), FEATURE_DIM));
        prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn forward_always_yields_a_valid_allocation(
        kind in kind(),
        scen in scenario(),
        scale in 0.01..3.0f64,
        seed in any::<u64>(),
    ) {
        let cfg = EnergyModelConfig::default();
        let hyper = TrainHyper { hidden: 8, ..TrainHyper::default() };
        let (g, r) = routed(&scen, &cfg);
        let inst = prepare(&g, &r, &cfg, kind, &hyper).unwrap();
        let params = AllocatorParams::init_uniform(kind, hyper.hidden, hyper.node2vec.dim, scale, seed);
        let (out, _) = forward(&params, &inst.input, cfg.max_tx_power_w).unwrap();
        prop_assert!(out.allocation.validate(g.monitor_count(), &cfg).is_ok());
        prop_assert!(out.estimate.is_finite());
    }

    #[test]
    fn evaluation_agrees_with_the_simulator(kind in kind(), scen in scenario(), seed in any::<u64>()) {
        let cfg = EnergyModelConfig { battery_capacity_j: 12_000.0, ..EnergyModelConfig::default() };
        let hyper = TrainHyper { hidden: 8, ..TrainHyper::default() };
        let (g, r) = routed(&scen, &cfg);
        let inst = prepare(&g, &r, &cfg, kind, &hyper).unwrap();
        let params = AllocatorParams::init_uniform(kind, hyper.hidden, hyper.node2vec.dim, 0.5, seed);
        let eval = evaluate(&params, &inst, &hyper, &cfg).unwrap();
        let report = simulate(&r, &eval.allocation, &g, &cfg).unwrap();
        prop_assert!((eval.consumed_j - report.consumed_j).abs() <= 1e-6);
        prop_assert!((eval.remaining_j - report.remaining_j).abs() <= 1e-6);
        prop_assert_eq!(eval.feasible, report.feasible);
    }

    #[test]
    fn params_text_round_trips(kind in kind(), hidden in 1usize..12, seed in any::<u64>()) {
        let params = AllocatorParams::init_uniform(kind, hidden, 16, 1.0, seed);
        let back = AllocatorParams::from_text(&params.to_text()).unwrap();
        prop_assert_eq!(back, params);
    }
}
