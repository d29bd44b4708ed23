use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Default::default() }
    }
}

/// Bias-corrected Adam moments for one flat parameter buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            config,
        }
    }

    /// One Adam update of `params` along `grads` (a descent direction is
    /// `-grads`). The state is left untouched on error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::DimensionMismatch {
                what: "adam parameters",
                expected: self.m.len(),
                actual: grads.len().min(params.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::GradientDivergence);
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form: returns the advanced state and updated parameters.
pub fn adam_step(state: &AdamState, params: &[f64], grads: &[f64]) -> Result<(AdamState, Vec<f64>), NnError> {
    let mut s = state.clone();
    let mut p = params.to_vec();
    s.step(&mut p, grads)?;
    Ok((s, p))
}
