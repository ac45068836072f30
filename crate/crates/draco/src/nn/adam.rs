//! Adam optimizer over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First/second moment accumulators for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. Errors on shape mismatch or non-finite
/// gradients (training has diverged at that point).
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "adam shapes disagree: state {}, params {}, grads {}",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::invalid("learning rate must be finite and > 0"));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::diverged("non-finite gradient in adam step"));
    }
    state.step += 1;
    let b1t = 1.0 - state.beta1.powi(state.step as i32);
    let b2t = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
