use serde::{Deserialize, Serialize};

use super::features::{build_input, ModelInput};
use super::loss::{joint_loss, joint_loss_grad, EnergyTerms, LossBreakdown};
use super::model::{backward, forward};
use super::params::AllocatorParams;
use super::{AllocatorError, ModelKind, TrainHyper};
use crate::energy::{Allocation, EnergyModelConfig};
use crate::graph::NetworkGraph;
use crate::trajectory::Route;

/// One training or validation sample with everything precomputed that does
/// not depend on the parameters.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub input: ModelInput,
    pub terms: EnergyTerms,
}

pub fn prepare(
    graph: &NetworkGraph,
    route: &Route,
    cfg: &EnergyModelConfig,
    kind: ModelKind,
    hyper: &TrainHyper,
) -> Result<PreparedInstance, AllocatorError> {
    Ok(PreparedInstance {
        input: build_input(graph, route, cfg, kind, hyper)?,
        terms: EnergyTerms::new(graph, route, cfg),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub episode: usize,
    /// Mean |estimate - measured consumption| over the validation set, in joules.
    pub mean_abs_gap: f64,
    /// Mean training loss.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: AllocatorParams,
    pub records: Vec<TrainRecord>,
}

/// Outcome of applying a model to one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub allocation: Allocation,
    pub estimate_j: f64,
    pub consumed_j: f64,
    pub remaining_j: f64,
    pub feasible: bool,
}

impl Evaluation {
    pub fn gap_j(&self) -> f64 {
        (self.estimate_j - self.consumed_j).abs()
    }
}

pub fn evaluate(
    params: &AllocatorParams,
    inst: &PreparedInstance,
    hyper: &TrainHyper,
    cfg: &EnergyModelConfig,
) -> Result<Evaluation, AllocatorError> {
    let (out, _) = forward(params, &inst.input, cfg.max_tx_power_w)?;
    let eval = inst.terms.evaluate(&out.allocation);
    Ok(Evaluation {
        allocation: out.allocation,
        estimate_j: out.estimate * hyper.energy_scale_j,
        consumed_j: eval.consumed_j,
        remaining_j: eval.remaining_j,
        feasible: eval.before_j <= cfg.battery_capacity_j && eval.after_j <= cfg.battery_capacity_j,
    })
}

/// Loss on one instance and its gradient with respect to every parameter.
pub fn instance_gradient(
    params: &AllocatorParams,
    inst: &PreparedInstance,
    hyper: &TrainHyper,
    cfg: &EnergyModelConfig,
) -> Result<(LossBreakdown, AllocatorParams), AllocatorError> {
    let (out, cache) = forward(params, &inst.input, cfg.max_tx_power_w)?;
    let eval = inst.terms.evaluate(&out.allocation);
    let w = &hyper.loss_weights;
    let scale = hyper.energy_scale_j;
    let loss = joint_loss(out.estimate, eval.consumed_j, eval.deficit_j, w, scale);
    let (d_est, d_consumed, d_deficit) = joint_loss_grad(out.estimate, eval.consumed_j, eval.deficit_j, w, scale);
    let sens = inst.terms.deficit_sensitivity(&eval);
    let n = sens.len();
    let d_collect: Vec<f64> = (0..n).map(|i| d_consumed + d_deficit * sens[i]).collect();
    let d_fraction: Vec<f64> = (0..n).map(|i| d_collect[i] * eval.dcollect_dfraction[i]).collect();
    let d_power: Vec<f64> = (0..n).map(|i| d_collect[i] * eval.dcollect_dpower[i]).collect();
    let grads = backward(params, &inst.input, &cache, &d_fraction, &d_power, d_est, cfg.max_tx_power_w);
    Ok((loss, grads))
}

fn mean_gap(
    params: &AllocatorParams,
    set: &[PreparedInstance],
    hyper: &TrainHyper,
    cfg: &EnergyModelConfig,
) -> Result<f64, AllocatorError> {
    let mut total = 0.0;
    for inst in set {
        total += evaluate(params, inst, hyper, cfg)?.gap_j();
    }
    Ok(total / set.len() as f64)
}

/// Full-batch gradient descent from a seeded uniform initialization. Each
/// record holds the validation gap and training loss measured before that
/// episode's update. An empty validation set falls back to the training set.
pub fn train(
    kind: ModelKind,
    train_set: &[PreparedInstance],
    validation: &[PreparedInstance],
    hyper: &TrainHyper,
    cfg: &EnergyModelConfig,
) -> Result<TrainedModel, AllocatorError> {
    if train_set.is_empty() {
        return Err(AllocatorError::NoInstances);
    }
    let validation = if validation.is_empty() { train_set } else { validation };
    let embed_dim = train_set[0].input.embedding.as_ref().map_or(hyper.node2vec.dim, |e| e.ncols());
    let mut params = AllocatorParams::init_uniform(kind, hyper.hidden, embed_dim, hyper.init_scale, hyper.seed);
    let mut records = Vec::with_capacity(hyper.episodes);
    let batch = train_set.len() as f64;

    for episode in 1..=hyper.episodes {
        let gap = mean_gap(&params, validation, hyper, cfg)?;
        let mut grad = params.zeros_like();
        let mut loss = 0.0;
        for inst in train_set {
            let (l, g) = instance_gradient(&params, inst, hyper, cfg)?;
            loss += l.total;
            grad.add_scaled(&g, 1.0);
        }
        loss /= batch;
        if !loss.is_finite() || !gap.is_finite() {
            return Err(AllocatorError::Diverged { episode, loss });
        }
        records.push(TrainRecord { episode, mean_abs_gap: gap, loss });
        params.add_scaled(&grad, -hyper.learning_rate / batch);
        if !params.is_finite() {
            return Err(AllocatorError::Diverged { episode, loss: f64::NAN });
        }
    }
    Ok(TrainedModel { params, records })
}
