use serde::{Deserialize, Serialize};

use super::model::{Gradients, Model};
use super::tensor::Real;
use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, model: &Model<T>) -> Self {
        let shapes: Vec<usize> = model.parameter_tensors().iter().map(|t| t.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut Model<T>, grads: &Gradients<T>) -> Result<()> {
        let grad_tensors = grads.tensors();
        if grad_tensors.len() != self.first.len()
            || grad_tensors.iter().zip(&self.first).any(|(g, m)| g.len() != m.len())
        {
            return Err(NnError::Dimension("gradients do not match optimizer state".into()));
        }
        self.step += 1;
        let c = &self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let eps = T::lit(c.epsilon);
        let bias1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bias2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::lit(c.learning_rate);

        for (((param, grad), m), v) in model
            .parameter_tensors_mut()
            .into_iter()
            .zip(grad_tensors)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
