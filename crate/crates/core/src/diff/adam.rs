use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Gradients;
use super::DiffError;

/// Adam hyper-parameters plus the per-epoch exponential learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplier applied to the learning rate once per epoch.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: 0.996,
        }
    }
}

/// Bias-corrected Adam with moment buffers for every tensor in a store.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
    epoch: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        assert!(
            config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0,
            "Adam betas must lie in (0, 1)"
        );
        let zeros: Vec<_> = store.ids().map(|id| Array2::zeros(store.get(id).raw_dim())).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
            epoch: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Current learning rate, `lr0 * decay^epoch`.
    pub fn lr(&self) -> f64 {
        self.config.lr0 * self.config.decay.powi(self.epoch as i32)
    }

    /// Advances the schedule by one epoch.
    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Applies one update. Non-finite gradients leave the store untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<(), DiffError> {
        if self.m.len() != store.len() {
            return Err(DiffError::DimMismatch {
                expected: self.m.len(),
                found: store.len(),
            });
        }
        for id in store.ids() {
            if let Some(g) = grads.get(id) {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(DiffError::NonFiniteGradient(store.name(id).to_string()));
                }
            }
        }

        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let lr = self.lr();
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for id in store.ids() {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            match grads.get(id) {
                Some(g) => {
                    Zip::from(&mut *m).and(&mut *v).and(g).for_each(|m, v, &g| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                    });
                }
                None => {
                    m.mapv_inplace(|m| beta1 * m);
                    v.mapv_inplace(|v| beta2 * v);
                }
            }
            Zip::from(store.get_mut(id)).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
