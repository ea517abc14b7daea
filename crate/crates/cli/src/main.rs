use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use uavgraph_core::codec::render_route_reply;
use uavgraph_core::decision::{propose_trajectory, BackendError, BackendKind, DecisionEngine};
use uavgraph_core::experiment::{
    calibrate_battery, run_gap_experiment, run_tasksize_sweep, write_gap_outputs, write_sweep_outputs, ExperimentError,
};
use uavgraph_core::{
    build_scenario, exhaustive_optimal, parse_graph, serialize_graph, simulate, Allocation, ExperimentConfig,
};

/// Two-stage UAV mission planner: route proposal, learned resource
/// allocation and the experiments around them.
#[derive(Debug, Parser)]
#[command(name = "uavgraph", version)]
struct Cli {
    /// Experiment config file (TOML), or `default` for built-in defaults.
    #[arg(long, global = true, default_value = "default")]
    config: String,
    /// Overrides the scenario and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the decision backend: heuristic, replay or http_llm.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Output directory for result files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate the battery capacity and print the bracketing oracle results.
    Calibrate,
    /// Train the three allocators and write the validation-gap curves.
    Gap,
    /// Sweep task sizes and write remaining energy per method.
    Sweep,
    /// Print the exhaustive-optimal route under uniform allocation.
    Oracle {
        /// Uniform task size to use instead of the configured tasks.
        #[arg(long)]
        task_mb: Option<f64>,
    },
    /// Check that the scenario graph survives serialization and parsing.
    Roundtrip,
    /// Propose one trajectory with the configured backend.
    Propose,
}

enum Outcome {
    Ok,
    ValidationFailed,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = if cli.config == "default" {
        ExperimentConfig::default()
    } else {
        ExperimentConfig::load(Path::new(&cli.config))?
    };
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
        cfg.hyper.seed = seed;
    }
    if let Some(kind) = cli.backend {
        cfg.backend.kind = kind;
    }
    if let Some(out) = &cli.out {
        cfg.experiment.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<Outcome> {
    let out_dir = &cfg.experiment.output_dir;
    match &cli.command {
        Command::Calibrate => {
            let cal = calibrate_battery(cfg)?;
            println!("battery_capacity_j = {:.6}", cal.capacity_j);
            println!(
                "oracle at {} MB: needs {:.6} J, remaining {:.6} J",
                cal.low_task_mb, cal.low_required_j, cal.low_remaining_j
            );
            println!(
                "oracle at {} MB: needs {:.6} J, remaining {:.6} J",
                cal.high_task_mb, cal.high_required_j, cal.high_remaining_j
            );
            if cli.out.is_some() {
                let mut resolved = cfg.clone();
                resolved.energy.battery_capacity_j = cal.capacity_j;
                resolved.experiment.calibrate = false;
                std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
                let path = out_dir.join("resolved_config.toml");
                std::fs::write(&path, resolved.to_toml_string())
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {}", path.display());
            }
            Ok(Outcome::Ok)
        }
        Command::Gap => {
            let report = run_gap_experiment(cfg)?;
            for path in write_gap_outputs(&report, cfg, out_dir)? {
                println!("wrote {}", path.display());
            }
            for m in &report.methods {
                match (&m.error, m.initial_gap(), m.final_gap()) {
                    (Some(e), _, _) => println!("{}: training failed: {e}", m.kind.method_name()),
                    (None, Some(a), Some(b)) => {
                        println!("{}: gap {a:.3} J -> {b:.3} J ({:.1}%)", m.kind.method_name(), 100.0 * b / a)
                    }
                    _ => println!("{}: no episodes", m.kind.method_name()),
                }
            }
            Ok(if report.all_improved() { Outcome::Ok } else { Outcome::ValidationFailed })
        }
        Command::Sweep => {
            let report = run_tasksize_sweep(cfg)?;
            for path in write_sweep_outputs(&report, cfg, out_dir)? {
                println!("wrote {}", path.display());
            }
            println!("battery capacity {:.3} J", report.energy.battery_capacity_j);
            for r in &report.rows {
                println!(
                    "{:>6} MB  {:<13} remaining {:>12.3} J  feasible {}{}",
                    r.task_size_mb,
                    r.method.method_name(),
                    r.remaining_energy_j,
                    r.feasible,
                    if r.fallback { "  (fallback route)" } else { "" }
                );
            }
            let err = report.max_conservation_error();
            if err > 1e-6 {
                println!("conservation violated by {err:e} J");
                return Ok(Outcome::ValidationFailed);
            }
            if !report.strictly_decreasing() {
                println!("note: remaining energy is not strictly decreasing for every method");
            }
            Ok(Outcome::Ok)
        }
        Command::Oracle { task_mb } => {
            let (energy, _) = cfg.resolved_energy()?;
            let mut graph = build_scenario(&cfg.scenario)?;
            if let Some(t) = task_mb {
                graph = graph.with_uniform_tasks(*t)?;
            }
            let alloc = Allocation::uniform(graph.monitor_count(), &energy);
            let best = exhaustive_optimal(&graph, &energy, &alloc)?;
            println!("{}", render_route_reply(&best.route));
            println!("charge_slot: {}", best.route.charge_slot());
            println!("consumed_j: {:.6}", best.score.consumed_j);
            println!("remaining_j: {:.6}", best.score.remaining_j);
            println!("feasible: {}", best.score.feasible);
            Ok(Outcome::Ok)
        }
        Command::Roundtrip => {
            let graph = build_scenario(&cfg.scenario)?;
            let text = serialize_graph(&graph);
            let parsed = parse_graph(&text.canonical()).map_err(|e| anyhow::anyhow!("{e}"))?;
            if parsed.graph != graph {
                println!("roundtrip mismatch");
                return Ok(Outcome::ValidationFailed);
            }
            let again = serialize_graph(&parsed.graph).canonical();
            if again != text.canonical() {
                println!("serialization is not stable");
                return Ok(Outcome::ValidationFailed);
            }
            println!("roundtrip ok: {} nodes, {} bytes", graph.len(), again.len());
            Ok(Outcome::Ok)
        }
        Command::Propose => {
            let energy = &cfg.energy;
            let graph = build_scenario(&cfg.scenario)?;
            let engine = DecisionEngine::from_spec(&cfg.backend, energy)?;
            let proposal = propose_trajectory(&graph, &engine)?;
            println!("{}", render_route_reply(&proposal.route));
            println!("backend: {}", proposal.provenance.backend.as_str());
            println!("attempts: {}", proposal.attempts);
            println!("fallback: {}", proposal.fallback);
            for d in &proposal.diagnostics {
                println!("diagnostic: {d}");
            }
            let report =
                simulate(&proposal.route, &Allocation::uniform(graph.monitor_count(), energy), &graph, energy)?;
            println!("consumed_j: {:.6}", report.consumed_j);
            println!("remaining_j: {:.6}", report.remaining_j);
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.downcast_ref::<ExperimentError>().is_some_and(ExperimentError::is_config)
                || matches!(e.downcast_ref::<BackendError>(), Some(BackendError::Config(_)));
            if config_error {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
