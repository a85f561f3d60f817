//! Adam, global-norm gradient clipping and learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update from the gradients held in `store`.
    /// Fails without touching anything if a gradient is not finite.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        store.check_finite_grads()?;
        if self.m.is_empty() {
            self.m = store.entries().iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != store.len() {
            return Err(Error::domain("optimizer state does not match the parameter store"));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, e) in store.entries_mut().iter_mut().enumerate() {
            if !e.tensor.requires_grad() {
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let g = e.tensor.grad().to_vec();
            for (i, x) in e.tensor.values_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *x -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients jointly so their global L2 norm is at most
/// `threshold`. Returns the norm before clipping.
pub fn clip_gradients(store: &mut ParamStore, threshold: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > threshold {
        let s = threshold / norm;
        for e in store.entries_mut() {
            e.tensor.grad_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LrSchedule {
    /// `lr0 / (1 + decay * e)`
    #[default]
    InverseTime,
    /// `lr0 * (1 - decay)^e`
    Exponential,
}

impl LrSchedule {
    pub fn rate(self, lr0: f64, decay: f64, epoch: usize) -> f64 {
        match self {
            LrSchedule::InverseTime => lr0 / (1.0 + decay * epoch as f64),
            LrSchedule::Exponential => lr0 * (1.0 - decay).powi(epoch as i32),
        }
    }
}
