//! Parameter storage and the two layer types the models are built from.
//!
//! Parameters live in a flat, ordered [`Params`] store; layers keep
//! [`ParamId`] handles into it. Before a forward pass the store is bound
//! onto a [`Graph`] once — trainable or frozen — so a layer used twice in
//! one graph (the cycle runs the same synthesizer for both passes) shares
//! a single parameter node and its gradients accumulate there.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ad::{Gradients, Graph, Var};
use crate::mat::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Ordered, named parameter tensors.
#[derive(Default)]
pub struct Params {
    tensors: Vec<(String, Mat)>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.tensors.iter().any(|(n, _)| *n == name),
            "duplicate parameter name {name}"
        );
        self.tensors.push((name, value));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.tensors[id.0].1
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.tensors[id.0].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.tensors.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Mat)> {
        self.tensors.iter_mut().map(|(n, m)| (n.as_str(), m))
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|(_, m)| m.len()).sum()
    }

    /// Insert every tensor into the graph as a trainable leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|(_, m)| g.param(m.clone())).collect(),
        }
    }

    /// Insert every tensor as a constant (inference mode).
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(_, m)| g.constant(m.clone()))
                .collect(),
        }
    }

    /// Collect per-parameter gradients after a backward pass.
    pub fn grads(&self, bound: &Bound, gradients: &mut Gradients) -> Vec<Option<Mat>> {
        bound.vars.iter().map(|&v| gradients.take(v)).collect()
    }

    /// Overwrite values by name (checkpoint restore). Unknown or missing
    /// names are reported as errors by the caller via the returned lists.
    pub fn load_named(&mut self, mut source: impl FnMut(&str) -> Option<Mat>) -> Vec<String> {
        let mut missing = Vec::new();
        for (name, value) in &mut self.tensors {
            match source(name) {
                Some(m) if m.shape() == value.shape() => *value = m,
                _ => missing.push(name.clone()),
            }
        }
        missing
    }
}

/// Graph variables for one binding of a [`Params`] store.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Uniform Kaiming-style init in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
pub fn init_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Mat {
    let bound = (1.0 / fan_in as f64).sqrt();
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect(),
    )
}

/// Fully connected layer, `[T x in] -> [T x out]`.
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        params: &mut Params,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = params.add(format!("{name}.w"), init_uniform(in_dim, out_dim, in_dim, rng));
        let b = params.add(format!("{name}.b"), Mat::zeros(1, out_dim));
        Self { w, b }
    }

    /// Same, but with the bias started at a chosen value (used by the
    /// synthesizer heads so filters start quiet).
    pub fn with_bias(
        params: &mut Params,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = params.add(format!("{name}.w"), init_uniform(in_dim, out_dim, in_dim, rng));
        let b = params.add(format!("{name}.b"), Mat::filled(1, out_dim, bias));
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: Var) -> Var {
        let y = g.matmul(x, bound.var(self.w));
        g.broadcast_row_add(y, bound.var(self.b))
    }
}

/// Same-padded 1-D convolution over the frame axis.
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
    pub dilation: usize,
}

impl Conv1d {
    pub fn new(
        params: &mut Params,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * kernel;
        let w = params.add(
            format!("{name}.w"),
            init_uniform(out_ch, kernel * in_ch, fan_in, rng),
        );
        let b = params.add(format!("{name}.b"), Mat::zeros(1, out_ch));
        Self {
            w,
            b,
            kernel,
            dilation,
        }
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: Var) -> Var {
        g.conv1d(x, bound.var(self.w), bound.var(self.b), self.kernel, self.dilation)
    }
}
