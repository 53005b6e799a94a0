use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::OptimConfig;
use crate::data::Batch;
use crate::error::Result;
use crate::numeric::{AdamState, DenseArray};
use crate::world_model::{LossWeights, RunningScale, WorldModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub consistency: f64,
    pub reward: f64,
    pub value: f64,
    pub termination: f64,
    pub model_loss: f64,
    pub policy_loss: f64,
    pub q_scale: f64,
    pub grad_norm: f64,
}

/// Owns a model plus its two optimizers and performs gradient updates.
#[derive(Clone, Debug)]
pub struct Learner {
    model: WorldModel,
    model_opt: AdamState,
    policy_opt: AdamState,
    scale: RunningScale,
    weights: LossWeights,
    discount: f64,
    momentum: f64,
    rng: ChaCha8Rng,
}

pub(crate) fn normal_array(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseArray {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DenseArray::matrix(rows, cols, data).expect("shape matches data")
}

impl Learner {
    pub fn new(model: WorldModel, cfg: &OptimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut model_opt = AdamState::new(model.params(), &model.model_ids(), cfg.adam())?;
        for id in model.encoder_ids() {
            model_opt.set_learning_rate(id, cfg.encoder_lr);
        }
        let policy_opt = AdamState::new(model.params(), &model.policy_ids(), cfg.adam())?;
        Ok(Self {
            model,
            model_opt,
            policy_opt,
            scale: RunningScale::new(cfg.percentile_rate),
            weights: LossWeights::from_config(cfg),
            discount: cfg.discount,
            momentum: cfg.target_momentum,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn model(&self) -> &WorldModel {
        &self.model
    }

    pub fn into_model(self) -> WorldModel {
        self.model
    }

    pub fn scale(&self) -> &RunningScale {
        &self.scale
    }

    pub fn set_scale(&mut self, value: f64) {
        self.scale.value = value;
    }

    /// TD targets, model step, policy step, target update.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        let (b, a_dim) = (batch.size(), self.model.action_dim());
        let pair = self.model.sample_pair(&mut self.rng);
        let td_noise: Vec<DenseArray> = (0..batch.horizon()).map(|_| normal_array(b, a_dim, &mut self.rng)).collect();
        let targets = self.model.model_targets(batch, pair, &td_noise, self.discount)?;
        let graph = self.model.model_loss_graph(self.model.params(), batch, &targets, &self.weights)?;
        let grads = graph.tape.backward(graph.loss)?;
        let grad_norm = self.model_opt.step(self.model.params_mut(), &grads)?;
        drop(grads);

        let pi_noise: Vec<DenseArray> = graph.latents.iter().map(|_| normal_array(b, a_dim, &mut self.rng)).collect();
        // The Q term uses the scale from before this batch's percentile update.
        let (tape, loss, qs) =
            self.model
                .policy_loss_graph(self.model.params(), &graph.latents, &pi_noise, self.scale.divisor(), &self.weights)?;
        let pgrads = tape.backward(loss)?;
        self.policy_opt.step(self.model.params_mut(), &pgrads)?;
        self.scale.update(&qs);
        self.model.target_update(self.momentum);

        let t = graph.terms;
        Ok(UpdateStats {
            consistency: t.consistency,
            reward: t.reward,
            value: t.value,
            termination: t.termination,
            model_loss: t.total,
            policy_loss: tape.value(loss).item(),
            q_scale: self.scale.value,
            grad_norm,
        })
    }
}
