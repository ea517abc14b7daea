//! Decision layer: pluggable completion backends and the loop that turns
//! their replies into valid routes.
//!
//! Replies are repaired when possible (duplicates dropped, missing points
//! appended in nearest-neighbor order, a missing charging stop placed at the
//! best position) and re-prompted only on fatal issues. When retries run
//! out the built-in heuristic answers instead, so a valid route always comes
//! back.

mod backends;

pub use backends::{prompt_key, ChatMessage, ChatRequest, HeuristicBackend, HttpLlmBackend, ReplayBackend};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

use crate::codec::{parse_route_reply, serialize_graph, Diagnostic, ParsedRoute};
use crate::energy::{Allocation, EnergyModelConfig};
use crate::graph::NetworkGraph;
use crate::trajectory::{best_charge_insertion, nearest_neighbor_extend, Route, TrajectoryError};

pub const MAX_RETRIES_LIMIT: u8 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Transport failures and unusable responses; worth another attempt.
    #[error("retriable backend failure: {0}")]
    Retriable(String),
    /// A replay fixture ran out of replies for this prompt.
    #[error("{0}")]
    Exhausted(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpLlm,
    Replay,
    Heuristic,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::HttpLlm => "http_llm",
            BackendKind::Replay => "replay",
            BackendKind::Heuristic => "heuristic",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "http_llm" | "http" => Ok(BackendKind::HttpLlm),
            "replay" => Ok(BackendKind::Replay),
            "heuristic" => Ok(BackendKind::Heuristic),
            other => Err(format!("unknown backend `{other}` (expected http_llm, replay or heuristic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionBackendSpec {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub max_retries: u8,
    pub temperature: f64,
    /// Environment variable holding the API key for `http_llm`.
    pub api_key_env: String,
    pub replay_fixture: Option<PathBuf>,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
}

impl Default for DecisionBackendSpec {
    fn default() -> Self {
        Self {
            kind: BackendKind::Heuristic,
            endpoint: None,
            model_name: "heuristic-2opt".into(),
            max_retries: 2,
            temperature: 0.0,
            api_key_env: "LLM_API_KEY".into(),
            replay_fixture: None,
            timeout_secs: 30.0,
            max_in_flight: 4,
        }
    }
}

impl DecisionBackendSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(BackendError::Config(format!(
                "max_retries must be at most {MAX_RETRIES_LIMIT}, got {}",
                self.max_retries
            )));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        match self.kind {
            BackendKind::HttpLlm if self.endpoint.as_deref().is_none_or(str::is_empty) => {
                Err(BackendError::Config("http_llm backend needs an endpoint".into()))
            }
            BackendKind::HttpLlm if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) => {
                Err(BackendError::Config("timeout_secs must be positive".into()))
            }
            BackendKind::Replay => match &self.replay_fixture {
                Some(p) if p.is_file() => Ok(()),
                Some(p) => Err(BackendError::Config(format!("replay fixture {} does not exist", p.display()))),
                None => Err(BackendError::Config("replay backend needs a replay_fixture path".into())),
            },
            _ => Ok(()),
        }
    }
}

/// Anything that turns a prompt into reply text. Implementations must be
/// shareable across concurrent trials.
pub trait DecisionBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Builds the backend described by `spec`.
pub fn build_backend(
    spec: &DecisionBackendSpec,
    energy: &EnergyModelConfig,
) -> Result<Box<dyn DecisionBackend>, BackendError> {
    spec.validate()?;
    Ok(match spec.kind {
        BackendKind::Heuristic => Box::new(HeuristicBackend::new(energy.clone())),
        BackendKind::Replay => Box::new(ReplayBackend::from_file(spec.replay_fixture.as_deref().expect("validated"))?),
        BackendKind::HttpLlm => Box::new(HttpLlmBackend::new(
            spec.endpoint.as_deref().expect("validated"),
            &spec.model_name,
            spec.temperature,
            &spec.api_key_env,
            Duration::from_secs_f64(spec.timeout_secs),
            spec.max_in_flight,
        )?),
    })
}

/// One-shot convenience over [`build_backend`].
pub fn complete(spec: &DecisionBackendSpec, energy: &EnergyModelConfig, prompt: &str) -> Result<String, BackendError> {
    if prompt.is_empty() {
        return Err(BackendError::Config("empty prompt".into()));
    }
    build_backend(spec, energy)?.complete(prompt)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub backend: BackendKind,
    pub model_name: String,
}

/// A route plus a record of how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal {
    pub route: Route,
    pub provenance: Provenance,
    /// Backend calls made, the fallback excluded.
    pub attempts: usize,
    /// Calls beyond the first.
    pub retries: usize,
    /// Set when the heuristic produced the route after the backend failed.
    pub fallback: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub backend_errors: Vec<String>,
}

/// Backend plus the settings the decision loop needs.
pub struct DecisionEngine {
    backend: Box<dyn DecisionBackend>,
    model_name: String,
    max_retries: u8,
    energy: EnergyModelConfig,
}

impl DecisionEngine {
    pub fn from_spec(spec: &DecisionBackendSpec, energy: &EnergyModelConfig) -> Result<Self, BackendError> {
        Ok(Self {
            backend: build_backend(spec, energy)?,
            model_name: spec.model_name.clone(),
            max_retries: spec.max_retries,
            energy: energy.clone(),
        })
    }

    pub fn with_backend(backend: Box<dyn DecisionBackend>, max_retries: u8, energy: &EnergyModelConfig) -> Self {
        Self { model_name: backend.kind().as_str().into(), backend, max_retries, energy: energy.clone() }
    }

    pub fn kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn energy(&self) -> &EnergyModelConfig {
        &self.energy
    }
}

fn retry_suffix(diags: &[Diagnostic]) -> String {
    let problems: Vec<String> = diags.iter().filter(|d| d.is_fatal()).map(|d| d.message.clone()).collect();
    format!(
        "\n\nYour previous answer could not be used ({}). Reply with exactly one line of the form \
         Route: A -> <id> -> ... -> C -> ... -> A that names every monitor node once.",
        problems.join("; ")
    )
}

/// Turns a parsed reply into a valid route: missing points are appended in
/// nearest-neighbor order from the last named point and a missing charging
/// stop goes to the best insertion position.
pub fn repair_route(
    parsed: &ParsedRoute,
    graph: &NetworkGraph,
    energy: &EnergyModelConfig,
) -> Result<Route, TrajectoryError> {
    let from = parsed.visits.last().copied().unwrap_or(graph.start());
    let mut order = parsed.visits.clone();
    order.extend(nearest_neighbor_extend(graph, from, &parsed.visits));
    match parsed.charge_slot {
        Some(slot) => Route::new(order, slot, graph),
        None => {
            let alloc = Allocation::uniform(graph.monitor_count(), energy);
            Ok(best_charge_insertion(&order, graph, energy, &alloc)?.route)
        }
    }
}

/// Serialize, prompt, parse, repair; re-prompt on fatal issues up to the
/// retry budget, then fall back to the heuristic. Only configuration errors
/// are returned.
pub fn propose_trajectory(graph: &NetworkGraph, engine: &DecisionEngine) -> Result<Proposal, BackendError> {
    let base = serialize_graph(graph).render_prompt();
    let mut prompt = base.clone();
    let mut proposal = Proposal {
        route: Route::new(graph.monitors().to_vec(), 0, graph).expect("identity route"),
        provenance: Provenance { backend: engine.backend.kind(), model_name: engine.model_name.clone() },
        attempts: 0,
        retries: 0,
        fallback: false,
        diagnostics: Vec::new(),
        backend_errors: Vec::new(),
    };
    let to_config = |e: TrajectoryError| BackendError::Config(e.to_string());

    for attempt in 0..=usize::from(engine.max_retries) {
        proposal.attempts = attempt + 1;
        proposal.retries = attempt;
        match engine.backend.complete(&prompt) {
            Ok(reply) => {
                let response = parse_route_reply(&reply, graph);
                proposal.diagnostics.extend(response.diagnostics.iter().cloned());
                if let Some(parsed) = &response.parsed_route {
                    proposal.route = repair_route(parsed, graph, &engine.energy).map_err(to_config)?;
                    return Ok(proposal);
                }
                prompt = format!("{base}{}", retry_suffix(&response.diagnostics));
            }
            Err(e @ BackendError::Config(_)) => return Err(e),
            Err(e) => proposal.backend_errors.push(e.to_string()),
        }
    }

    let reply = HeuristicBackend::new(engine.energy.clone()).complete(&base)?;
    let parsed = parse_route_reply(&reply, graph)
        .parsed_route
        .ok_or_else(|| BackendError::Config("heuristic reply did not parse".into()))?;
    proposal.route = repair_route(&parsed, graph, &engine.energy).map_err(to_config)?;
    proposal.fallback = true;
    Ok(proposal)
}
