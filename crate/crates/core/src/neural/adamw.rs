//! AdamW: Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{DacatError, Result};
use crate::neural::params::Parameters;
use crate::neural::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self::new(1e-3, 0.01)
    }
}

#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of `params` from `grads` (same structure, same visit order).
    pub fn step<P: Parameters<f64>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut grad_tensors: Vec<&Tensor<f64>> = Vec::new();
        grads.visit("", &mut |_, t| grad_tensors.push(t));
        if grad_tensors.iter().any(|g| !g.is_finite()) {
            return Err(DacatError::NonFinite("gradients"));
        }
        if self.moments.is_empty() {
            self.moments = grad_tensors
                .iter()
                .map(|g| (vec![0.0; g.len()], vec![0.0; g.len()]))
                .collect();
        }

        self.step += 1;
        let AdamWConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        let mut idx = 0;
        let mut mismatch = None;
        let moments = &mut self.moments;
        params.visit_mut("", &mut |name, w| {
            let Some(g) = grad_tensors.get(idx) else {
                mismatch.get_or_insert(name);
                return;
            };
            if g.shape() != w.shape() {
                mismatch.get_or_insert(name);
                return;
            }
            let (m, v) = &mut moments[idx];
            for (((wi, &gi), mi), vi) in w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *wi -= lr * weight_decay * *wi;
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *wi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
        match mismatch {
            Some(name) => Err(DacatError::MissingTensor(name)),
            None => Ok(()),
        }
    }
}
