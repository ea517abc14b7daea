use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::features::ModelInput;
use super::params::{AllocatorParams, Dense, GraphLayer};
use super::{AllocatorError, ModelKind};
use crate::energy::Allocation;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub allocation: Allocation,
    /// Estimate head output, in units of the energy scale.
    pub estimate: f64,
    /// Per-row attention coefficients of each attention layer.
    pub attention: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Mean { z: Array2<f64>, az: Array2<f64>, pre: Array2<f64> },
    Attention { z: Array2<f64>, wh: Array2<f64>, t: Array2<f64>, alpha: Array2<f64>, pre: Array2<f64> },
}

/// Intermediate values kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    node_repr: Array2<f64>,
    alloc_pre: Array2<f64>,
    alloc_act: Array2<f64>,
    fractions: Array1<f64>,
    power_gate: Array1<f64>,
    pooled: Array1<f64>,
    est_pre: Array1<f64>,
    est_act: Array1<f64>,
}

impl ForwardCache {
    /// Which side of zero every rectifier input lies on. Two parameter
    /// settings with equal patterns lie on the same smooth piece.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerCache::Mean { pre, .. } => out.extend(pre.iter().map(|&v| v > 0.0)),
                LayerCache::Attention { t, pre, .. } => {
                    out.extend(t.iter().map(|&v| v > 0.0));
                    out.extend(pre.iter().map(|&v| v > 0.0));
                }
            }
        }
        out.extend(self.alloc_pre.iter().map(|&v| v > 0.0));
        out.extend(self.est_pre.iter().map(|&v| v > 0.0));
        out
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn relu_mask(grad: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    g
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn row_softmax(a: &mut Array2<f64>) {
    for mut row in a.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

fn dense_rows(d: &Dense, x: &Array2<f64>) -> Array2<f64> {
    x.dot(&d.w.t()) + &d.b
}

/// Runs the encoder and both heads. Bandwidth shares come from a softmax
/// over monitoring points and power from a sigmoid scaled to `max_power_w`,
/// so the allocation is always within budget.
pub fn forward(
    params: &AllocatorParams,
    input: &ModelInput,
    max_power_w: f64,
) -> Result<(ModelOutput, ForwardCache), AllocatorError> {
    input.check(params.kind)?;
    if !params.is_finite() {
        return Err(AllocatorError::NonFinite);
    }
    let x = &input.features;
    let a = &input.neighbor_weights;
    let mut caches = Vec::with_capacity(params.layers.len());
    let mut attention = Vec::new();

    let node_repr = match params.kind {
        ModelKind::Node2Vec => {
            let emb = input.embedding.as_ref().expect("checked above");
            if emb.ncols() + x.ncols() != params.head_input_dim() {
                return Err(AllocatorError::Shape(format!("embedding width {}", emb.ncols())));
            }
            concatenate![Axis(1), emb.view(), x.view()]
        }
        ModelKind::Gnn | ModelKind::Gat => {
            let mut z = x.clone();
            for layer in &params.layers {
                let h = match layer {
                    GraphLayer::Mean { w_self, w_neigh, b } => {
                        let az = a.dot(&z);
                        let pre = z.dot(&w_self.t()) + az.dot(&w_neigh.t()) + b;
                        let h = relu(&pre);
                        caches.push(LayerCache::Mean { z, az, pre });
                        h
                    }
                    GraphLayer::Attention { w, a_src, a_dst, b } => {
                        let wh = z.dot(&w.t());
                        let src = wh.dot(a_src);
                        let dst = wh.dot(a_dst);
                        let v = wh.nrows();
                        let t = Array2::from_shape_fn((v, v), |(i, j)| src[i] + dst[j]);
                        let mut alpha = t.mapv(leaky);
                        row_softmax(&mut alpha);
                        let pre = alpha.dot(&wh) + b;
                        let h = relu(&pre);
                        attention.push(alpha.clone());
                        caches.push(LayerCache::Attention { z, wh, t, alpha, pre });
                        h
                    }
                };
                z = concatenate![Axis(1), h.view(), x.view()];
            }
            z
        }
    };

    let monitors = node_repr.select(Axis(0), &input.monitor_rows);
    let alloc_pre = dense_rows(&params.alloc_hidden, &monitors);
    let alloc_act = relu(&alloc_pre);
    let out = dense_rows(&params.alloc_out, &alloc_act);
    let logits = out.column(0);
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut fractions = logits.mapv(|v| (v - max).exp());
    fractions /= fractions.sum();
    let power_gate = out.column(1).mapv(sigmoid);

    let pooled = node_repr.mean_axis(Axis(0)).expect("non-empty graph");
    let est_pre = params.est_hidden.w.dot(&pooled) + &params.est_hidden.b;
    let est_act = est_pre.mapv(|v| v.max(0.0));
    let estimate = params.est_out.w.row(0).dot(&est_act) + params.est_out.b[0];

    let allocation = Allocation {
        bandwidth_fraction: fractions.to_vec(),
        tx_power_w: power_gate.iter().map(|g| g * max_power_w).collect(),
    };
    let cache = ForwardCache {
        layers: caches,
        node_repr,
        alloc_pre,
        alloc_act,
        fractions,
        power_gate,
        pooled,
        est_pre,
        est_act,
    };
    Ok((ModelOutput { allocation, estimate, attention }, cache))
}

fn dense_backward(d: &Dense, grad_out: &Array2<f64>, x: &Array2<f64>, acc: &mut Dense) -> Array2<f64> {
    acc.w += &grad_out.t().dot(x);
    acc.b += &grad_out.sum_axis(Axis(0));
    grad_out.dot(&d.w)
}

/// Gradients of a scalar objective given its derivatives with respect to the
/// bandwidth shares, the transmit powers and the estimate.
pub fn backward(
    params: &AllocatorParams,
    input: &ModelInput,
    cache: &ForwardCache,
    d_fraction: &[f64],
    d_power: &[f64],
    d_estimate: f64,
    max_power_w: f64,
) -> AllocatorParams {
    let mut grads = params.zeros_like();
    let hidden = params.hidden_dim();
    let v = cache.node_repr.nrows();

    // Allocation head.
    let f = &cache.fractions;
    let df = Array1::from(d_fraction.to_vec());
    let inner = f.dot(&df);
    let d_logit = f * &(&df - inner);
    let d_gate = Array1::from_shape_fn(f.len(), |i| {
        let s = cache.power_gate[i];
        d_power[i] * max_power_w * s * (1.0 - s)
    });
    let mut d_out = Array2::zeros((f.len(), 2));
    d_out.column_mut(0).assign(&d_logit);
    d_out.column_mut(1).assign(&d_gate);
    let d_act = dense_backward(&params.alloc_out, &d_out, &cache.alloc_act, &mut grads.alloc_out);
    let d_pre = relu_mask(&d_act, &cache.alloc_pre);
    let monitors = cache.node_repr.select(Axis(0), &input.monitor_rows);
    let d_monitors = dense_backward(&params.alloc_hidden, &d_pre, &monitors, &mut grads.alloc_hidden);
    let mut d_repr = Array2::<f64>::zeros(cache.node_repr.raw_dim());
    for (k, &row) in input.monitor_rows.iter().enumerate() {
        let mut r = d_repr.row_mut(row);
        r += &d_monitors.row(k);
    }

    // Estimate head.
    let w_out = params.est_out.w.row(0);
    grads.est_out.w.row_mut(0).scaled_add(d_estimate, &cache.est_act);
    grads.est_out.b[0] += d_estimate;
    let d_est_pre = Array1::from_shape_fn(hidden, |k| if cache.est_pre[k] > 0.0 { d_estimate * w_out[k] } else { 0.0 });
    grads.est_hidden.w += &d_est_pre.view().insert_axis(Axis(1)).dot(&cache.pooled.view().insert_axis(Axis(0)));
    grads.est_hidden.b += &d_est_pre;
    let d_pooled = params.est_hidden.w.t().dot(&d_est_pre) / v as f64;
    d_repr += &d_pooled.view().insert_axis(Axis(0));

    // Encoder layers, last to first; only the hidden part of each layer's
    // output carries gradient.
    if params.layers.is_empty() {
        return grads;
    }
    let mut d_h = d_repr.slice(s![.., ..hidden]).to_owned();
    for (depth, (layer, (lc, lg))) in
        params.layers.iter().zip(cache.layers.iter().zip(grads.layers.iter_mut())).enumerate().rev()
    {
        let d_z = match (layer, lc, lg) {
            (
                GraphLayer::Mean { w_self, w_neigh, .. },
                LayerCache::Mean { z, az, pre },
                GraphLayer::Mean { w_self: g_self, w_neigh: g_neigh, b: g_b },
            ) => {
                let d_pre = relu_mask(&d_h, pre);
                *g_self += &d_pre.t().dot(z);
                *g_neigh += &d_pre.t().dot(az);
                *g_b += &d_pre.sum_axis(Axis(0));
                d_pre.dot(w_self) + input.neighbor_weights.t().dot(&d_pre.dot(w_neigh))
            }
            (
                GraphLayer::Attention { w, a_src, a_dst, .. },
                LayerCache::Attention { z, wh, t, alpha, pre },
                GraphLayer::Attention { w: g_w, a_src: g_src, a_dst: g_dst, b: g_b },
            ) => {
                let d_pre = relu_mask(&d_h, pre);
                *g_b += &d_pre.sum_axis(Axis(0));
                let d_alpha = d_pre.dot(&wh.t());
                let mut d_wh = alpha.t().dot(&d_pre);
                let row_dot = (alpha * &d_alpha).sum_axis(Axis(1));
                let mut d_t = alpha * &(&d_alpha - &row_dot.view().insert_axis(Axis(1)));
                d_t.zip_mut_with(t, |g, &tv| {
                    if tv <= 0.0 {
                        *g *= LEAKY_SLOPE
                    }
                });
                let d_src = d_t.sum_axis(Axis(1));
                let d_dst = d_t.sum_axis(Axis(0));
                *g_src += &wh.t().dot(&d_src);
                *g_dst += &wh.t().dot(&d_dst);
                d_wh += &d_src.view().insert_axis(Axis(1)).dot(&a_src.view().insert_axis(Axis(0)));
                d_wh += &d_dst.view().insert_axis(Axis(1)).dot(&a_dst.view().insert_axis(Axis(0)));
                *g_w += &d_wh.t().dot(z);
                d_wh.dot(w)
            }
            _ => unreachable!("layer kinds are fixed per model"),
        };
        if depth > 0 {
            d_h = d_z.slice(s![.., ..hidden]).to_owned();
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::super::features::FEATURE_DIM;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(kind: ModelKind, v: usize, seed: u64) -> ModelInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_fn((v, FEATURE_DIM), |_| rng.gen_range(0.0..1.0));
        let mut a = Array2::from_shape_fn((v, v), |(i, j)| if i == j { 0.0 } else { rng.gen_range(0.1..1.0) });
        for mut row in a.axis_iter_mut(Axis(0)) {
            let s = row.sum();
            row /= s;
        }
        let embedding =
            (kind == ModelKind::Node2Vec).then(|| Array2::from_shape_fn((v, 16), |_| rng.gen_range(-1.0..1.0)));
        ModelInput { features, neighbor_weights: a, monitor_rows: (1..v - 1).collect(), embedding }
    }

    #[test]
    fn zero_weights_give_uniform_share_and_half_power() {
        for kind in ModelKind::ALL {
            let p = AllocatorParams::zeros(kind, 32, 16);
            let input = random_input(kind, 8, 1);
            let (out, _) = forward(&p, &input, 1.0).unwrap();
            for (&f, &pw) in out.allocation.bandwidth_fraction.iter().zip(&out.allocation.tx_power_w) {
                assert!((f - 1.0 / 6.0).abs() < 1e-15);
                assert_eq!(pw, 0.5);
            }
            assert_eq!(out.estimate, 0.0);
        }
    }

    #[test]
    fn identical_features_give_uniform_attention() {
        let p = AllocatorParams::init_uniform(ModelKind::Gat, 32, 16, 0.1, 5);
        let mut input = random_input(ModelKind::Gat, 7, 2);
        let row = input.features.row(0).to_owned();
        for mut r in input.features.axis_iter_mut(Axis(0)) {
            r.assign(&row);
        }
        let (out, _) = forward(&p, &input, 1.0).unwrap();
        for alpha in &out.attention {
            for &a in alpha {
                assert!((a - 1.0 / 7.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let p = AllocatorParams::init_uniform(ModelKind::Gat, 32, 16, 0.5, 9);
        let (out, _) = forward(&p, &random_input(ModelKind::Gat, 9, 3), 1.0).unwrap();
        assert_eq!(out.attention.len(), 2);
        for alpha in &out.attention {
            for row in alpha.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn allocation_is_valid_for_large_weights() {
        for kind in ModelKind::ALL {
            let p = AllocatorParams::init_uniform(kind, 32, 16, 5.0, 11);
            let (out, _) = forward(&p, &random_input(kind, 8, 4), 1.0).unwrap();
            let sum: f64 = out.allocation.bandwidth_fraction.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(out.allocation.tx_power_w.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn non_finite_params_fail_fast() {
        let mut p = AllocatorParams::zeros(ModelKind::Gnn, 4, 16);
        p.est_out.b[0] = f64::NAN;
        assert!(matches!(forward(&p, &random_input(ModelKind::Gnn, 5, 1), 1.0), Err(AllocatorError::NonFinite)));
    }

    #[test]
    fn monitor_permutation_is_equivariant() {
        // Swap rows 2 and 4 and every quantity indexed by them.
        let perm = [0usize, 1, 4, 3, 2, 5, 6, 7];
        for kind in ModelKind::ALL {
            let p = AllocatorParams::init_uniform(kind, 32, 16, 0.3, 21);
            let input = random_input(kind, 8, 6);
            let permuted = ModelInput {
                features: input.features.select(Axis(0), &perm),
                neighbor_weights: input.neighbor_weights.select(Axis(0), &perm).select(Axis(1), &perm),
                monitor_rows: input.monitor_rows.clone(),
                embedding: input.embedding.as_ref().map(|e| e.select(Axis(0), &perm)),
            };
            let (a, _) = forward(&p, &input, 1.0).unwrap();
            let (b, _) = forward(&p, &permuted, 1.0).unwrap();
            assert!((a.estimate - b.estimate).abs() < 1e-12);
            for (k, &row) in input.monitor_rows.iter().enumerate() {
                let k2 = input.monitor_rows.iter().position(|&r| r == perm[row]).unwrap();
                assert!((a.allocation.bandwidth_fraction[k] - b.allocation.bandwidth_fraction[k2]).abs() < 1e-12);
                assert!((a.allocation.tx_power_w[k] - b.allocation.tx_power_w[k2]).abs() < 1e-12);
            }
        }
    }
}
