//! Allocator weights and their flat text file format.
//!
//! ```text
//! uavgraph-allocator v1
//! kind gnn
//! tensor layers.0.w_self 32 8
//! <one line of space-separated values per row>
//! ...
//! ```
//!
//! Vectors are written with a single dimension. Values use Rust's shortest
//! round-trip float formatting, so a save/load cycle is exact.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AllocatorError, ModelKind, FEATURE_DIM};

pub const PARAMS_HEADER: &str = "uavgraph-allocator v1";

/// Fully connected layer `y = W x + b` with `W` stored as (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { w: Array2::zeros((out_dim, in_dim)), b: Array1::zeros(out_dim) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphLayer {
    /// Weighted-mean message passing: `relu(W_self z_i + W_neigh mean_j z_j + b)`.
    Mean { w_self: Array2<f64>, w_neigh: Array2<f64>, b: Array1<f64> },
    /// Single-head attention over all nodes.
    Attention { w: Array2<f64>, a_src: Array1<f64>, a_dst: Array1<f64>, b: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorParams {
    pub kind: ModelKind,
    pub layers: Vec<GraphLayer>,
    pub alloc_hidden: Dense,
    pub alloc_out: Dense,
    pub est_hidden: Dense,
    pub est_out: Dense,
}

/// Shapes of one tensor, `[len]` for vectors.
pub type Shape = Vec<usize>;

impl AllocatorParams {
    /// All-zero parameters of the right shapes.
    pub fn zeros(kind: ModelKind, hidden: usize, embed_dim: usize) -> Self {
        let f = FEATURE_DIM;
        let layers = match kind {
            ModelKind::Gnn => vec![
                GraphLayer::Mean {
                    w_self: Array2::zeros((hidden, f)),
                    w_neigh: Array2::zeros((hidden, f)),
                    b: Array1::zeros(hidden),
                },
                GraphLayer::Mean {
                    w_self: Array2::zeros((hidden, hidden + f)),
                    w_neigh: Array2::zeros((hidden, hidden + f)),
                    b: Array1::zeros(hidden),
                },
            ],
            ModelKind::Gat => vec![
                GraphLayer::Attention {
                    w: Array2::zeros((hidden, f)),
                    a_src: Array1::zeros(hidden),
                    a_dst: Array1::zeros(hidden),
                    b: Array1::zeros(hidden),
                },
                GraphLayer::Attention {
                    w: Array2::zeros((hidden, hidden + f)),
                    a_src: Array1::zeros(hidden),
                    a_dst: Array1::zeros(hidden),
                    b: Array1::zeros(hidden),
                },
            ],
            ModelKind::Node2Vec => Vec::new(),
        };
        let head_in = match kind {
            ModelKind::Node2Vec => embed_dim + f,
            _ => hidden + f,
        };
        Self {
            kind,
            layers,
            alloc_hidden: Dense::zeros(hidden, head_in),
            alloc_out: Dense::zeros(2, hidden),
            est_hidden: Dense::zeros(hidden, head_in),
            est_out: Dense::zeros(1, hidden),
        }
    }

    /// Every entry drawn uniformly from `[-scale, scale]`.
    pub fn init_uniform(kind: ModelKind, hidden: usize, embed_dim: usize, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(kind, hidden, embed_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, _, values) in p.tensors_mut() {
            for v in values {
                *v = rng.gen_range(-scale..=scale);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, _, values) in z.tensors_mut() {
            values.fill(0.0);
        }
        z
    }

    /// Width of the node representation fed to the heads.
    pub fn head_input_dim(&self) -> usize {
        self.alloc_hidden.w.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.alloc_hidden.w.nrows()
    }

    /// Named, shaped, mutable views over every tensor, in file order.
    pub fn tensors_mut(&mut self) -> Vec<(String, Shape, &mut [f64])> {
        fn m(name: String, a: &mut Array2<f64>) -> (String, Shape, &mut [f64]) {
            let shape = a.shape().to_vec();
            (name, shape, a.as_slice_mut().expect("standard layout"))
        }
        fn v(name: String, a: &mut Array1<f64>) -> (String, Shape, &mut [f64]) {
            let shape = vec![a.len()];
            (name, shape, a.as_slice_mut().expect("standard layout"))
        }
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                GraphLayer::Mean { w_self, w_neigh, b } => {
                    out.push(m(format!("layers.{i}.w_self"), w_self));
                    out.push(m(format!("layers.{i}.w_neigh"), w_neigh));
                    out.push(v(format!("layers.{i}.b"), b));
                }
                GraphLayer::Attention { w, a_src, a_dst, b } => {
                    out.push(m(format!("layers.{i}.w"), w));
                    out.push(v(format!("layers.{i}.a_src"), a_src));
                    out.push(v(format!("layers.{i}.a_dst"), a_dst));
                    out.push(v(format!("layers.{i}.b"), b));
                }
            }
        }
        for (name, d) in [
            ("alloc_hidden", &mut self.alloc_hidden),
            ("alloc_out", &mut self.alloc_out),
            ("est_hidden", &mut self.est_hidden),
            ("est_out", &mut self.est_out),
        ] {
            out.push(m(format!("{name}.w"), &mut d.w));
            out.push(v(format!("{name}.b"), &mut d.b));
        }
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut c = self.clone();
        c.tensors_mut().into_iter().flat_map(|(_, _, v)| v.to_vec()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for (_, _, values) in self.tensors_mut() {
            values.copy_from_slice(&flat[at..at + values.len()]);
            at += values.len();
        }
        assert_eq!(at, flat.len(), "flat parameter length mismatch");
    }

    pub fn len(&self) -> usize {
        self.to_flat().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &AllocatorParams, alpha: f64) {
        let theirs = other.to_flat();
        let mut at = 0;
        for (_, _, values) in self.tensors_mut() {
            for v in values.iter_mut() {
                *v += alpha * theirs[at];
                at += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{PARAMS_HEADER}\nkind {}\n", self.kind.as_str());
        let mut c = self.clone();
        for (name, shape, values) in c.tensors_mut() {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!("tensor {name} {}\n", dims.join(" ")));
            let row_len = *shape.last().expect("non-empty shape");
            for row in values.chunks(row_len.max(1)) {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&vals.join(" "));
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`Self::to_text`] output. Shapes must match the architecture
    /// implied by the `kind` line and the first tensor.
    pub fn from_text(text: &str) -> Result<Self, AllocatorError> {
        let bad = |msg: String| AllocatorError::ParamsFormat(msg);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(PARAMS_HEADER) {
            return Err(bad(format!("missing header `{PARAMS_HEADER}`")));
        }
        let kind: ModelKind = lines
            .next()
            .and_then(|l| l.trim().strip_prefix("kind "))
            .ok_or_else(|| bad("missing kind line".into()))?
            .parse()
            .map_err(bad)?;

        let mut tensors: Vec<(String, Shape, Vec<f64>)> = Vec::new();
        let mut pending: Option<(String, Shape, usize)> = None;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("tensor ") {
                if let Some((name, _, _)) = &pending {
                    return Err(bad(format!("tensor {name} is truncated")));
                }
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| bad("tensor without name".into()))?.to_string();
                let shape: Shape = parts
                    .map(|d| d.parse().map_err(|_| bad(format!("bad dimension in {line:?}"))))
                    .collect::<Result<_, _>>()?;
                let total = shape.iter().product();
                tensors.push((name.clone(), shape.clone(), Vec::with_capacity(total)));
                pending = Some((name, shape, total));
            } else {
                let (_, _, values) = tensors.last_mut().ok_or_else(|| bad("values before first tensor".into()))?;
                for tok in line.split_whitespace() {
                    values.push(tok.parse().map_err(|_| bad(format!("bad value {tok:?}")))?);
                }
                if let Some((name, _, total)) = &pending {
                    match values.len().cmp(total) {
                        std::cmp::Ordering::Equal => pending = None,
                        std::cmp::Ordering::Greater => return Err(bad(format!("tensor {name} has too many values"))),
                        std::cmp::Ordering::Less => {}
                    }
                }
            }
        }
        if let Some((name, _, _)) = pending {
            return Err(bad(format!("tensor {name} is truncated")));
        }

        let find = |name: &str| tensors.iter().find(|t| t.0 == name).map(|t| t.1.clone());
        let hidden =
            find("alloc_out.w").and_then(|s| s.get(1).copied()).ok_or_else(|| bad("missing alloc_out.w".into()))?;
        let head_in = find("alloc_hidden.w")
            .and_then(|s| s.get(1).copied())
            .ok_or_else(|| bad("missing alloc_hidden.w".into()))?;
        let embed_dim = head_in.saturating_sub(FEATURE_DIM);
        let mut params = Self::zeros(kind, hidden, embed_dim);
        let expected = params.tensors_mut().len();
        if expected != tensors.len() {
            return Err(bad(format!("expected {expected} tensors for {}, found {}", kind.as_str(), tensors.len())));
        }
        for ((name, shape, slot), (got_name, got_shape, values)) in params.tensors_mut().into_iter().zip(&tensors) {
            if &name != got_name || &shape != got_shape {
                return Err(bad(format!("expected tensor {name} {shape:?}, found {got_name} {got_shape:?}")));
            }
            slot.copy_from_slice(values);
        }
        if !params.is_finite() {
            return Err(AllocatorError::NonFinite);
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        for kind in ModelKind::ALL {
            let p = AllocatorParams::init_uniform(kind, 32, 16, 0.1, 7);
            let back = AllocatorParams::from_text(&p.to_text()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = AllocatorParams::init_uniform(ModelKind::Gnn, 32, 16, 0.1, 42);
        let b = AllocatorParams::init_uniform(ModelKind::Gnn, 32, 16, 0.1, 42);
        assert_eq!(a, b);
        assert!(a.to_flat().iter().all(|v| v.abs() <= 0.1));
        assert_ne!(a, AllocatorParams::init_uniform(ModelKind::Gnn, 32, 16, 0.1, 43));
    }

    #[test]
    fn flat_view_round_trip() {
        let p = AllocatorParams::init_uniform(ModelKind::Gat, 8, 16, 0.1, 1);
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat());
        assert_eq!(p, q);
        q.add_scaled(&p, -1.0);
        assert!(q.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_corrupt_files() {
        let p = AllocatorParams::init_uniform(ModelKind::Node2Vec, 32, 16, 0.1, 3);
        let text = p.to_text();
        assert!(AllocatorParams::from_text(&text.replacen(PARAMS_HEADER, "uavgraph-allocator v0", 1)).is_err());
        assert!(AllocatorParams::from_text(&text.replacen("kind node2vec", "kind gnn", 1)).is_err());
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(AllocatorParams::from_text(&truncated).is_err());
        assert!(AllocatorParams::from_text(&text.replacen("tensor alloc_out.w 2 32", "tensor alloc_out.w 2 31", 1))
            .is_err());
    }
}
