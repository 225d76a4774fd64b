//! Adam ascent on policy logits.

use crate::error::{Error, Result};
use crate::policy::PolicyLayer;

/// Adam moment state for one layer's logits.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> AdamState {
        AdamState { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m: vec![0.0; dim], v: vec![0.0; dim] }
    }
}

/// One bias-corrected ascent step: `theta += lr * m_hat / (sqrt(v_hat) + eps)`.
/// Refuses non-finite gradients.
pub fn adam_step(state: &mut AdamState, layer: &mut PolicyLayer, grad: &[f64]) -> Result<()> {
    if grad.len() != layer.logits.len() || grad.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "adam dims: grad {}, logits {}, state {}",
            grad.len(),
            layer.logits.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite policy gradient at coordinate {i} (step {})",
            state.step + 1
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..grad.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        layer.logits[i] += state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
