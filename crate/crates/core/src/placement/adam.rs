use serde::{Deserialize, Serialize};

use crate::population::Legality;
use crate::sandbox::LegalityVerdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Returns the position delta.
pub fn adam_step(state: &mut AdamState, gradient: &[f64], learning_rate: f64) -> Result<Vec<f64>, LegalityVerdict> {
    assert_eq!(gradient.len(), state.m.len(), "gradient dimension");
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(LegalityVerdict::new(
            Legality::NonFinite,
            format!("non-finite gradient component {i}"),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let mut delta = Vec::with_capacity(gradient.len());
    for (i, &g) in gradient.iter().enumerate() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        delta.push(-learning_rate * m_hat / (v_hat.sqrt() + state.eps));
    }
    Ok(delta)
}
