//! Dense multilayer perceptron: tanh on hidden layers, identity on the
//! output layer. Parameters live in one flat vector, laid out per layer as
//! row-major weights [out x in] followed by biases [out]; that layout is also
//! the serialization format for policies.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations cached by a forward pass; `acts[0]` is the input and
/// `acts[last]` the output.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

/// Gradients from a backward pass: flat parameter gradient in the same layout
/// as [`Mlp`] params, plus the gradient with respect to the input.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

impl Mlp {
    /// Xavier-style init: weights ~ N(0, sqrt(2 / (fan_in + fan_out))),
    /// biases zero.
    pub fn new(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let std = (2.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(z * std);
            }
            params.extend(std::iter::repeat(0.0).take(n_out));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    pub fn from_params(layer_sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        Self::check_sizes(&layer_sizes)?;
        if params.len() != param_count(&layer_sizes) {
            return Err(Error::invalid(format!(
                "expected {} parameters for layer sizes {layer_sizes:?}, got {}",
                param_count(&layer_sizes),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(Mlp { layer_sizes, params })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(
                "an MLP needs at least input and output layers of positive size",
            ));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Scale the output layer's weights and biases; used to start policy
    /// heads near-uniform so early exploration is broad.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let l = self.layer_sizes.len() - 2;
        let (off, n_in, n_out) = self.layer_span(l);
        for p in &mut self.params[off..off + n_in * n_out + n_out] {
            *p *= factor;
        }
    }

    /// (flat offset, n_in, n_out) of layer `l`.
    fn layer_span(&self, l: usize) -> (usize, usize, usize) {
        let mut off = 0;
        for w in self.layer_sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, self.layer_sizes[l], self.layer_sizes[l + 1])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(input)?;
        Ok(trace.acts.pop().expect("trace has at least the input"))
    }

    /// Forward pass that keeps every layer's activations for backprop.
    pub fn forward_trace(&self, input: &[f64]) -> Result<MlpTrace> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input dimension {} does not match network input {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut off = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = acts.last().unwrap();
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut z = biases[o];
                for (wi, xi) in row.iter().zip(prev) {
                    z += wi * xi;
                }
                next.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
            acts.push(next);
        }
        Ok(MlpTrace { acts })
    }

    /// Backprop the scalar `sum(output * output_grad)` through a cached
    /// forward pass. Returns flat parameter gradients (same layout as
    /// `params`) and the input gradient.
    pub fn backward(&self, trace: &MlpTrace, output_grad: &[f64]) -> Result<MlpGrads> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::invalid(format!(
                "output gradient dimension {} does not match network output {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if trace.acts.len() != self.layer_sizes.len()
            || trace
                .acts
                .iter()
                .zip(&self.layer_sizes)
                .any(|(a, &s)| a.len() != s)
        {
            return Err(Error::invalid("trace does not match network architecture"));
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut grads = vec![0.0; self.params.len()];
        // Gradient w.r.t. the current layer's pre-activation; the output
        // layer is linear so it starts as output_grad itself.
        let mut delta = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                // Hidden layers are tanh: d/dz tanh(z) = 1 - tanh(z)^2.
                for (d, a) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let (off, n_in, n_out) = self.layer_span(l);
            let a_in = &trace.acts[l];
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let g = delta[o];
                let w_row = &self.params[off + o * n_in..off + (o + 1) * n_in];
                let g_row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for i in 0..n_in {
                    g_row[i] = g * a_in[i];
                    d_in[i] += g * w_row[i];
                }
            }
            for o in 0..n_out {
                grads[off + n_in * n_out + o] = delta[o];
            }
            delta = d_in;
        }
        Ok(MlpGrads {
            params: grads,
            input: delta,
        })
    }
}
