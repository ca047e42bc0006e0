use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Cosine annealing from `initial_lr` to `floor_lr` over `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub initial_lr: f64,
    pub floor_lr: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.initial_lr;
        }
        let p = step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.floor_lr + 0.5 * (self.initial_lr - self.floor_lr) * (1.0 + (std::f64::consts::PI * p).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// AdamW moment buffers and step counter.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub config: AdamWConfig,
    pub schedule: CosineSchedule,
    pub step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(params: &ParamStore, config: AdamWConfig, schedule: CosineSchedule) -> Self {
        let first = params.iter().map(|p| vec![0.0; p.value.len()]).collect::<Vec<_>>();
        Self {
            config,
            schedule,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr(self.step)
    }

    /// One decoupled-weight-decay Adam update. Parameters without a gradient
    /// are left untouched; it is an error if none has one.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<f64> {
        if self.first.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer built for {} parameters, store has {}",
                self.first.len(),
                params.len()
            )));
        }
        if params.iter().all(|p| p.grad.is_none()) {
            let name = params.iter().next().map(|p| p.name.clone()).unwrap_or_default();
            return Err(Error::MissingGrad(name));
        }
        let lr = self.current_lr();
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let Some(g) = p.grad.as_ref() else { continue };
            let w = p.value.data_mut();
            for i in 0..w.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                w[i] -= lr * weight_decay * w[i];
                w[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        self.step += 1;
        Ok(lr)
    }
}
