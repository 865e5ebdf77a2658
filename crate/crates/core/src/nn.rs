//! Minimal feedforward network with reverse-mode gradients and the Adam
//! optimizer. Fixed MLP topology, flat weight storage with an explicit layout
//! so callers can address per-specializer weight slices contiguously.
//!
//! Layout: for each layer l mapping n_in -> n_out, the weight matrix is stored
//! row-major (n_out x n_in) followed by the n_out biases.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input length {got} does not match layer size {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("gradient length {got} does not match weight count {want}")]
    GradMismatch { got: usize, want: usize },
    #[error("non-finite gradient at index {0}")]
    NonFiniteGrad(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<f64>,
    pub activation: Activation,
}

pub fn weight_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        Mlp { layer_sizes: layer_sizes.to_vec(), weights: vec![0.0; weight_count(layer_sizes)], activation: Activation::Relu }
    }

    /// Per-layer uniform init in ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn glorot<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Mlp::zeros(layer_sizes);
        let mut off = 0;
        for l in 0..layer_sizes.len() - 1 {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for w in net.weights[off..off + n_in * n_out].iter_mut() {
                *w = rng.random_range(-limit..limit);
            }
            off += (n_in + 1) * n_out;
        }
        net
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn weight_count(&self) -> usize {
        weight_count(&self.layer_sizes)
    }

    /// Affine + ReLU stack with a linear output layer.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_cached(x)?.activations.pop().expect("output layer"))
    }

    fn forward_cached(&self, x: &[f64]) -> Result<Cache, NnError> {
        if x.len() != self.input_size() {
            return Err(NnError::DimMismatch { got: x.len(), want: self.input_size() });
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let prev = activations.last().expect("prev layer");
            let mut out = vec![0.0; n_out];
            for (o, out_slot) in out.iter_mut().enumerate() {
                let row = &self.weights[off + o * n_in..off + (o + 1) * n_in];
                let mut acc = self.weights[off + n_in * n_out + o]; // bias
                for (w, a) in row.iter().zip(prev.iter()) {
                    acc += w * a;
                }
                *out_slot = acc;
            }
            if l + 1 < n_layers {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(out);
            off += (n_in + 1) * n_out;
        }
        Ok(Cache { activations })
    }

    /// Exact reverse-mode gradients of `output · upstream` with respect to the
    /// weights and the input. ReLU subgradient at 0 is 0.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        if upstream.len() != self.output_size() {
            return Err(NnError::DimMismatch { got: upstream.len(), want: self.output_size() });
        }
        let cache = self.forward_cached(x)?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut grad_w = vec![0.0; self.weight_count()];
        let mut delta = upstream.to_vec();
        // Layer offsets for the flat array.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += (self.layer_sizes[l] + 1) * self.layer_sizes[l + 1];
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.activations[l];
            if l + 1 < n_layers {
                // Post-activation values are cached; ReLU gate: zero where the
                // unit is off (subgradient 0 at the kink).
                let post = &cache.activations[l + 1];
                for (d, p) in delta.iter_mut().zip(post.iter()) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for i in 0..n_in {
                        grad_w[off + o * n_in + i] += d * input[i];
                    }
                }
                grad_w[off + n_in * n_out + o] += d;
            }
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &self.weights[off + o * n_in..off + (o + 1) * n_in];
                    for (n, w) in next.iter_mut().zip(row.iter()) {
                        *n += d * w;
                    }
                }
            }
            delta = next;
        }
        Ok((grad_w, delta))
    }
}

struct Cache {
    activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr0: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr0,
            decay_factor: 0.9,
            decay_every: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Step-size schedule: lr0 decayed by 10% every `decay_every` steps.
    pub fn effective_lr(&self, t: u64) -> f64 {
        self.lr0 * self.decay_factor.powi((t / self.decay_every) as i32)
    }
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(0, 1e-2)
    }
}

/// Textbook Adam with bias correction; returns updated copies.
pub fn adam_step(state: &AdamState, w: &[f64], grad: &[f64]) -> Result<(Vec<f64>, AdamState), NnError> {
    if grad.len() != w.len() || state.m.len() != w.len() {
        return Err(NnError::GradMismatch { got: grad.len(), want: w.len() });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(NnError::NonFiniteGrad(i));
    }
    let mut next = state.clone();
    next.t = state.t + 1;
    let lr = state.effective_lr(next.t);
    let b1t = 1.0 - state.beta1.powi(next.t as i32);
    let b2t = 1.0 - state.beta2.powi(next.t as i32);
    let mut w_out = w.to_vec();
    for i in 0..w.len() {
        next.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        next.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        let m_hat = next.m[i] / b1t;
        let v_hat = next.v[i] / b2t;
        w_out[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok((w_out, next))
}
