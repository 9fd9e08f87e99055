use serde::{Deserialize, Serialize};

use crate::error::{NdrError, Result};
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty: `weight_decay * param` is added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(params: &mut ParamSet, grads: &[Vec<f64>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(NdrError::Invalid(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (id, g) in params.ids().zip(grads) {
        if g.len() != params.tensors()[id.index()].len() {
            return Err(NdrError::shape("adam_step", format!("gradient length for `{}`", params.name(id))));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NdrError::NonFiniteGradient { name: params.name(id).to_owned(), step: state.step + 1 });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let gi = gi + cfg.weight_decay * *theta;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
