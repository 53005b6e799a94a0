use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{DenseArray, Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 20.0,
        }
    }
}

/// Bias-corrected Adam over a fixed subset of a [`ParamStore`], with
/// global-norm clipping across that subset.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    blocks: Vec<ParamId>,
    learning_rates: Vec<f64>,
    first_moment: Vec<DenseArray>,
    second_moment: Vec<DenseArray>,
}

impl AdamState {
    pub fn new(store: &ParamStore, blocks: &[ParamId], config: AdamConfig) -> Result<Self> {
        if config.learning_rate <= 0.0 || config.clip_norm <= 0.0 {
            return Err(Error::config("Adam learning rate and clip norm must be > 0"));
        }
        let zeros: Vec<DenseArray> = blocks
            .iter()
            .map(|&id| DenseArray::zeros(store.get(id).shape()))
            .collect();
        Ok(Self {
            config,
            step_count: 0,
            blocks: blocks.to_vec(),
            learning_rates: vec![config.learning_rate; blocks.len()],
            first_moment: zeros.clone(),
            second_moment: zeros,
        })
    }

    pub fn blocks(&self) -> &[ParamId] {
        &self.blocks
    }

    pub fn set_learning_rate(&mut self, id: ParamId, lr: f64) {
        if let Some(i) = self.blocks.iter().position(|&b| b == id) {
            self.learning_rates[i] = lr;
        }
    }

    pub fn first_moment(&self, id: ParamId) -> Option<&DenseArray> {
        self.blocks
            .iter()
            .position(|&b| b == id)
            .map(|i| &self.first_moment[i])
    }

    /// Norm of the managed blocks' gradients before clipping.
    pub fn grad_norm(&self, grads: &Gradients) -> f64 {
        self.blocks
            .iter()
            .filter_map(|&id| grads.get(id))
            .map(|g| g.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Applies one update and returns the pre-clip gradient norm.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<f64> {
        for &id in &self.blocks {
            if let Some(g) = grads.get(id) {
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", store.name(id))));
                }
            }
        }
        let norm = self.grad_norm(grads);
        let clip = if norm > self.config.clip_norm {
            self.config.clip_norm / norm
        } else {
            1.0
        };
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for (i, &id) in self.blocks.iter().enumerate() {
            let lr = self.learning_rates[i];
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            let p = store.get_mut(id).data_mut();
            let g = grads.get(id).map(|g| g.data());
            for j in 0..p.len() {
                let gj = g.map_or(0.0, |g| g[j] * clip);
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + self.config.eps);
            }
        }
        Ok(norm)
    }
}
