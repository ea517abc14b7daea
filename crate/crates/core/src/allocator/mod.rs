//! Stage-two bandwidth and power allocator.
//!
//! Three interchangeable encoders share the same heads and loss: two layers
//! of distance-weighted mean message passing, two layers of single-head
//! attention, or fixed node2vec embeddings. Gradients are written out by
//! hand and checked against central differences in the tests.

mod features;
mod loss;
mod model;
mod node2vec;
mod params;
mod train;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{build_input, encode_features, neighbor_weights, ModelInput, FEATURE_DIM};
pub use loss::{joint_loss, joint_loss_grad, EnergyTerms, LossBreakdown, LossWeights, TermsEval};
pub use model::{backward, forward, ForwardCache, ModelOutput};
pub use node2vec::{node2vec_embed, walk_graph, walk_graph_with, Node2VecHyper};
pub use params::{AllocatorParams, Dense, GraphLayer, PARAMS_HEADER};
pub use train::{evaluate, instance_gradient, prepare, train, Evaluation, PreparedInstance, TrainRecord, TrainedModel};

use crate::energy::EnergyError;

#[derive(Debug, Error)]
pub enum AllocatorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parameters contain non-finite values")]
    NonFinite,
    #[error("training diverged at episode {episode}: loss {loss}")]
    Diverged { episode: usize, loss: f64 },
    #[error("no training instances")]
    NoInstances,
    #[error("malformed parameter file: {0}")]
    ParamsFormat(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gnn,
    Node2Vec,
    Gat,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Gnn, ModelKind::Node2Vec, ModelKind::Gat];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gnn => "gnn",
            ModelKind::Node2Vec => "node2vec",
            ModelKind::Gat => "gat",
        }
    }

    /// Name used for the method column of result files.
    pub fn method_name(self) -> &'static str {
        match self {
            ModelKind::Gnn => "llm+gnn",
            ModelKind::Node2Vec => "llm+node2vec",
            ModelKind::Gat => "llm+gat",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gnn" | "llm+gnn" => Ok(ModelKind::Gnn),
            "node2vec" | "llm+node2vec" => Ok(ModelKind::Node2Vec),
            "gat" | "llm+gat" => Ok(ModelKind::Gat),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

/// Training and architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub hidden: usize,
    pub learning_rate: f64,
    pub episodes: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub loss_weights: LossWeights,
    /// Joules per unit of the estimate head output.
    pub energy_scale_j: f64,
    /// Task size mapped to 1.0 in the task feature.
    pub task_scale_mb: f64,
    pub node2vec: Node2VecHyper,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 0.01,
            episodes: 500,
            seed: 42,
            init_scale: 0.1,
            loss_weights: LossWeights::default(),
            energy_scale_j: 40_000.0,
            task_scale_mb: 40.0,
            node2vec: Node2VecHyper::default(),
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 {
            return Err("hidden width must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err("learning_rate must be positive".into());
        }
        if !(self.energy_scale_j.is_finite() && self.energy_scale_j > 0.0) {
            return Err("energy_scale_j must be positive".into());
        }
        if !(self.task_scale_mb.is_finite() && self.task_scale_mb > 0.0) {
            return Err("task_scale_mb must be positive".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err("init_scale must be non-negative".into());
        }
        self.node2vec.validate()
    }
}
