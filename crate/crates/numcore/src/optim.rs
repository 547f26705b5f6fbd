use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ParamGrads;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr > 0.0) || !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config(format!("invalid AdamW hyperparameters {self:?}")));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid AdamW hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// AdamW with bias correction and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step_count: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Ok(AdamW {
            config,
            m: zeros(),
            v: zeros(),
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update using the configured learning rate.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        let lr = self.config.lr;
        self.step_with_lr(store, grads, lr)
    }

    /// One update with an explicit learning rate (for schedules). Frozen
    /// parameters are left bit-identical, decay included.
    pub fn step_with_lr(&mut self, store: &mut ParamStore, grads: &ParamGrads, lr: f64) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::dim("adamw_step", &[store.len()], &[grads.len()]));
        }
        for (id, g) in grads.iter() {
            if g.is_some_and(|g| g.shape() != store.value(id).shape()) {
                return Err(Error::dim(
                    "adamw_step",
                    store.value(id).shape(),
                    g.map(|g| g.shape()).unwrap_or(&[]),
                ));
            }
        }
        self.step_count += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (id, g) in grads.iter() {
            let Some(g) = g else { continue };
            if !store.is_trainable(id) {
                continue;
            }
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            let p = store.value_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * p[i]);
            }
        }
        Ok(())
    }
}

/// Linear warmup to `peak_lr`, then linear decay to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(peak_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        if !(peak_lr > 0.0) || total_steps == 0 || warmup_steps > total_steps {
            return Err(Error::Config(format!(
                "invalid schedule: peak {peak_lr}, warmup {warmup_steps}, total {total_steps}"
            )));
        }
        Ok(LrSchedule {
            peak_lr,
            warmup_steps,
            total_steps,
        })
    }

    /// Warmup over the first `warmup_fraction` of `total_steps` (rounded down).
    pub fn with_warmup_fraction(peak_lr: f64, warmup_fraction: f64, total_steps: u64) -> Result<Self> {
        let warmup = (warmup_fraction * total_steps as f64).floor() as u64;
        LrSchedule::new(peak_lr, warmup, total_steps)
    }

    /// Learning rate at `step`. Steps past `total_steps` clamp to 0.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step > self.total_steps {
            return 0.0;
        }
        if step < self.warmup_steps {
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        let decay = self.total_steps - self.warmup_steps;
        if decay == 0 {
            return self.peak_lr;
        }
        self.peak_lr * (self.total_steps - step) as f64 / decay as f64
    }
}
