//! Adam with a cosine-annealed learning rate.

use crate::error::{CoreError, Result};
use crate::params::ParamSet;
use std::collections::BTreeMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            base_lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 10,
        }
    }
}

/// lr(e) = base_lr * 0.5 * (1 + cos(pi * e / max_epochs)), clamped at the
/// schedule end; non-increasing in `epoch`.
pub fn cosine_lr(base_lr: f64, epoch: usize, max_epochs: usize) -> f64 {
    if max_epochs == 0 {
        return base_lr;
    }
    let e = epoch.min(max_epochs) as f64;
    base_lr * 0.5 * (1.0 + (PI * e / max_epochs as f64).cos())
}

/// Optimizer state: step count plus first/second moments per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter, at the cosine lr for `epoch`.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Vec<f64>>,
        epoch: usize,
    ) -> Result<()> {
        let lr = cosine_lr(self.cfg.base_lr, epoch, self.cfg.max_epochs);
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);

        for (name, tensor) in params.iter_mut() {
            let g = grads.get(name).ok_or_else(|| {
                CoreError::Config(format!("missing gradient for parameter '{name}'"))
            })?;
            if g.len() != tensor.numel() {
                return Err(CoreError::Shape {
                    op: "adam_step",
                    msg: format!(
                        "gradient length {} does not match parameter '{name}' ({})",
                        g.len(),
                        tensor.numel()
                    ),
                });
            }
            if !g.iter().all(|x| x.is_finite()) {
                return Err(CoreError::BadGradient {
                    param: name.clone(),
                });
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            if m.len() != g.len() {
                return Err(CoreError::Shape {
                    op: "adam_step",
                    msg: format!("moment shape drifted for parameter '{name}'"),
                });
            }
            let data = tensor.data_mut();
            for i in 0..g.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
