use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) weight decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Bias-corrected Adam moments for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first_moment: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        let second_moment = first_moment.clone();
        Self {
            config,
            first_moment,
            second_moment,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. Gradients are checked for finiteness before anything is
    /// modified, so a failed step leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { param: i });
            }
        }

        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((pj, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                let m_hat = *mj / bc1;
                let v_hat = *vj / bc2;
                if weight_decay > 0.0 {
                    *pj -= lr * weight_decay * *pj;
                }
                *pj -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}
