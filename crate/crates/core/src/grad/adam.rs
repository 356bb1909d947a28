use alloc::vec::Vec;

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for every entry of a [`ParamStore`] (buffers keep empty
/// accumulators).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new<T: Real>(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = |e: &crate::grad::ParamEntry<T>| {
            if e.trainable {
                alloc::vec![0.0; e.value.numel()]
            } else {
                Vec::new()
            }
        };
        Self {
            config,
            step: 0,
            m: store.entries().iter().map(zeros).collect(),
            v: store.entries().iter().map(zeros).collect(),
        }
    }

    /// One bias-corrected Adam update of every trainable parameter.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::shape("adam_step", "gradient count does not match parameters"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - libm::pow(beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(beta2, self.step as f64);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            if !store.entries()[i].trainable {
                continue;
            }
            let g = &grads[i];
            if g.shape() != store.get(id).shape() {
                return Err(Error::shape("adam_step", alloc::format!("gradient {i} has the wrong shape")));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in store.get_mut(id).data_mut().iter_mut().enumerate() {
                let gj = g.data()[j].as_f64();
                let mj = beta1 * m[j] as f64 + (1.0 - beta1) * gj;
                let vj = beta2 * v[j] as f64 + (1.0 - beta2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let update = lr * (mj / c1) / (libm::sqrt(vj / c2) + eps);
                *w = T::from_f64(w.as_f64() - update);
            }
        }
        Ok(())
    }
}
