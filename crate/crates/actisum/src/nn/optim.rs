//! Adaptive-moment optimizer with bias correction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::Parameter;
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates keyed by parameter name, plus
/// the shared step counter. Serializable so interrupted runs resume exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    moments: BTreeMap<String, MomentPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MomentPair {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One update over `(parameter, gradient)` pairs at learning rate `lr`.
    /// Frozen parameters are left untouched even if a gradient is supplied;
    /// a trainable parameter without a gradient is an error.
    pub fn step(&mut self, params: &mut [(&mut Parameter, Option<&Tensor>)], lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (param, grad) in params.iter_mut() {
            if param.frozen {
                continue;
            }
            let grad = grad.ok_or_else(|| {
                Error::validation(format!("missing gradient for trainable parameter {}", param.name))
            })?;
            if grad.data.len() != param.len() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: param.value.shape.clone(),
                    right: grad.shape.clone(),
                });
            }
            let slot = self.moments.entry(param.name.clone()).or_insert_with(|| MomentPair {
                m: vec![0.0; param.len()],
                v: vec![0.0; param.len()],
            });
            if slot.m.len() != param.len() {
                return Err(Error::validation(format!(
                    "optimizer moments for {} have stale size",
                    param.name
                )));
            }
            for i in 0..param.len() {
                let g = grad.data[i];
                slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
                slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                param.value.data[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
