use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, NamedTensorMut};
use crate::tensor::Element;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Epochs between learning-rate decays.
    pub scheduler_step_size: usize,
    pub scheduler_gamma: f64,
    /// Classical momentum; 0 gives plain SGD.
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            scheduler_step_size: 7,
            scheduler_gamma: 0.1,
            momentum: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Param(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.scheduler_step_size == 0 {
            return Err(Error::Param("scheduler step size must be positive".into()));
        }
        if !(self.scheduler_gamma > 0.0 && self.scheduler_gamma <= 1.0) {
            return Err(Error::Param(format!(
                "scheduler gamma must be in (0, 1], got {}",
                self.scheduler_gamma
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Param(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// Step decay: `α · γ^⌊epoch / step_size⌋`, with `epoch` counted from 0.
pub fn steplr(epoch: usize, config: &OptimizerConfig) -> f64 {
    let decays = (epoch / config.scheduler_step_size.max(1)) as i32;
    config.learning_rate * config.scheduler_gamma.powi(decays)
}

/// Plain SGD, `θ ← θ − α·∇θ`, on every trainable parameter, then zeroes the
/// gradients. Frozen parameters and buffers are skipped. Fails without
/// touching anything if a trainable parameter has no gradient.
pub fn sgd_step<E: Element>(params: &mut [NamedTensorMut<'_, E>], lr: f64) -> Result<()> {
    if let Some(p) = params
        .iter()
        .find(|p| p.kind.is_trainable() && p.tensor.grad().is_none())
    {
        return Err(Error::Optimizer(format!("trainable parameter {} has no gradient", p.name)));
    }
    for p in params.iter_mut().filter(|p| p.kind.is_trainable()) {
        let grad = p.tensor.grad().expect("checked above").to_vec();
        for (w, g) in p.tensor.data_mut().iter_mut().zip(&grad) {
            *w = E::from_acc(w.to_acc() - lr * g.to_acc());
        }
        p.tensor.zero_grad();
    }
    Ok(())
}

/// SGD with optional momentum (`v ← μv + g`, `θ ← θ − αv`).
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    momentum: f64,
    velocity: HashMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: HashMap::new(),
        }
    }

    pub fn step<E: Element>(&mut self, model: &mut Model<E>, lr: f64) -> Result<()> {
        let mut params = model.parameters_mut();
        if self.momentum == 0.0 {
            return sgd_step(&mut params, lr);
        }
        if let Some(p) = params
            .iter()
            .find(|p| p.kind.is_trainable() && p.tensor.grad().is_none())
        {
            return Err(Error::Optimizer(format!("trainable parameter {} has no gradient", p.name)));
        }
        for p in params.iter_mut().filter(|p| p.kind.is_trainable()) {
            let v = self
                .velocity
                .entry(p.name.clone())
                .or_insert_with(|| vec![0.0; p.tensor.len()]);
            let grad = p.tensor.grad().expect("checked above").to_vec();
            for ((w, g), v) in p.tensor.data_mut().iter_mut().zip(&grad).zip(v.iter_mut()) {
                *v = self.momentum * *v + g.to_acc();
                *w = E::from_acc(w.to_acc() - lr * *v);
            }
            p.tensor.zero_grad();
        }
        Ok(())
    }
}
