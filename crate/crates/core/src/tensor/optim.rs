//! Adam with decoupled weight decay, and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

use super::nn::ParamStore;
use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Moment buffers for one parameter list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_store(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let shapes: Vec<&[usize]> = store.iter().map(|(_, p)| p.value.shape()).collect();
        Self::new(config, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One AdamW update at learning rate `lr`. Parameters whose gradient is
    /// `None` keep their value and moments; frozen slots are skipped.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Option<Tensor<T>>], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(shape_err(format!(
                "optimizer tracks {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params[i].shape() {
                    return Err(shape_err(format!("gradient {i} has shape {:?}, parameter {:?}", g.shape(), params[i].shape())));
                }
                if g.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence(format!("non-finite gradient for parameter {i}")));
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);
        let lr = T::lit(lr);
        let eps = T::lit(c.eps);
        let decay = T::one() - lr * T::lit(c.weight_decay);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let p = params[i].data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = b1 * m[k] + (T::one() - b1) * gk;
                v[k] = b2 * v[k] + (T::one() - b2) * gk * gk;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                p[k] = p[k] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Updates the trainable parameters of `store` in place.
    pub fn step_store(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>], lr: f64) -> Result<()> {
        let masked: Vec<Option<Tensor<T>>> = store
            .iter()
            .zip(grads)
            .map(|((_, p), g)| if p.trainable { g.clone() } else { None })
            .collect();
        let mut params: Vec<&mut Tensor<T>> = store.params_mut().iter_mut().map(|p| &mut p.value).collect();
        self.step(&mut params, &masked, lr)
    }
}

/// Cosine annealing from `base` to zero over `total` steps.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let progress = (step.min(total) as f64) / total as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos())
}
