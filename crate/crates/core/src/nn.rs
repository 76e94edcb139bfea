//! Minimal dense feed-forward network with exact reverse-mode gradients and
//! an adaptive first-order optimizer. Hidden layers use tanh, the output
//! layer is linear. Everything is double precision; parameters live in one
//! flat array (per layer: weights row-major by output, then biases).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
}

/// Fully-connected network: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNetwork {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Per-layer parameter block offsets within the flat array.
fn layer_offsets(layer_sizes: &[usize]) -> Vec<(usize, usize, usize)> {
    // (weights_offset, biases_offset, next_offset)
    let mut out = Vec::new();
    let mut offset = 0;
    for l in 0..layer_sizes.len() - 1 {
        let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
        let w = offset;
        let b = w + n_in * n_out;
        offset = b + n_out;
        out.push((w, b, offset));
    }
    out
}

/// Total parameter count for an architecture.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

impl DenseNetwork {
    /// Zero-initialized network.
    pub fn zeros(layer_sizes: Vec<usize>) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(NnError::InvalidArchitecture(format!(
                "bad layer sizes {layer_sizes:?}"
            )));
        }
        let n = param_count(&layer_sizes);
        Ok(Self {
            layer_sizes,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights (±sqrt(6/(n_in+n_out))), zero biases.
    pub fn init<R: Rng>(layer_sizes: Vec<usize>, rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_sizes)?;
        for (l, (w_off, b_off, _)) in layer_offsets(&net.layer_sizes).into_iter().enumerate() {
            let (n_in, n_out) = (net.layer_sizes[l], net.layer_sizes[l + 1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for p in &mut net.params[w_off..b_off] {
                *p = rng.random_range(-bound..bound);
            }
            for p in &mut net.params[b_off..b_off + n_out] {
                *p = 0.0;
            }
        }
        Ok(net)
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.input_size() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_size(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input)?;
        Ok(self.forward_cached(input).pop().unwrap())
    }

    /// Activations of every layer (input first, output last).
    fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let offsets = layer_offsets(&self.layer_sizes);
        let n_layers = offsets.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        for (l, (w_off, b_off, _)) in offsets.into_iter().enumerate() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let prev = acts.last().unwrap();
            let mut next = Vec::with_capacity(n_out);
            for i in 0..n_out {
                let row = &self.params[w_off + i * n_in..w_off + (i + 1) * n_in];
                let mut z = self.params[b_off + i];
                for (w, x) in row.iter().zip(prev) {
                    z += w * x;
                }
                // tanh on hidden layers, identity on the output layer.
                next.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
            acts.push(next);
        }
        acts
    }

    /// Reverse-mode gradient of `upstream . forward(input)` with respect to
    /// all parameters and the input.
    pub fn gradient(&self, input: &[f64], upstream: &[f64]) -> Result<Gradient, NnError> {
        self.check_input(input)?;
        if upstream.len() != self.output_size() {
            return Err(NnError::ShapeMismatch {
                expected: self.output_size(),
                got: upstream.len(),
            });
        }
        let acts = self.forward_cached(input);
        let offsets = layer_offsets(&self.layer_sizes);
        let n_layers = offsets.len();
        let mut param_grad = vec![0.0; self.params.len()];
        // delta = dJ/dz of the current layer (z = pre-activation).
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (w_off, b_off, _) = offsets[l];
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            // The output layer is linear; hidden activations are tanh with
            // y = tanh(z), dy/dz = 1 - y^2.
            if l + 1 < n_layers {
                for (d, y) in delta.iter_mut().zip(&acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let prev = &acts[l];
            let mut prev_delta = vec![0.0; n_in];
            for i in 0..n_out {
                let di = delta[i];
                param_grad[b_off + i] += di;
                let row = w_off + i * n_in;
                for j in 0..n_in {
                    param_grad[row + j] += di * prev[j];
                    prev_delta[j] += di * self.params[row + j];
                }
            }
            delta = prev_delta;
        }
        Ok(Gradient {
            params: param_grad,
            input: delta,
        })
    }
}

/// Gradient with respect to the flat parameter array and the input vector.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Adam-style optimizer state (first/second moments with bias correction).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One adaptive moment-estimation update, in place. Deterministic given
    /// its inputs; finite inputs never produce non-finite parameters.
    pub fn apply_update(&mut self, params: &mut [f64], gradient: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || gradient.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                expected: self.m.len(),
                got: gradient.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = gradient[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
