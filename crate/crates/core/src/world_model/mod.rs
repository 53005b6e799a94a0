//! Latent world model: encoder, latent dynamics, reward, termination,
//! a value ensemble with a slowly-tracking target copy, and a squashed
//! Gaussian policy prior.

mod learner;
mod loss;

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::numeric::checkpoint::{read_blocks, write_blocks, CHECKPOINT_FORMAT};
use crate::numeric::{DenseArray, Mlp, MlpShape, OutputActivation, ParamId, ParamStore};
pub use learner::{Learner, UpdateStats};
pub use loss::{percentile_range, policy_objective, LossTerms, LossWeights, ModelTargets, RunningScale};

/// Which agent a model belongs to; fixes the observation channels and the
/// checkpoint block prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Tracker,
    Puppeteer,
}

impl Role {
    pub fn prefix(self) -> &'static str {
        match self {
            Role::Tracker => "tracker",
            Role::Puppeteer => "puppeteer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    role: Role,
    obs_dim: usize,
    action_dim: usize,
    model: ModelConfig,
    extra: serde_json::Value,
}

/// Outputs of an open-loop latent rollout.
#[derive(Clone, Debug)]
pub struct LatentRollout {
    /// `z_1..z_H`.
    pub latents: Vec<DenseArray>,
    pub rewards: Vec<Vec<f64>>,
    pub terminations: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct WorldModel {
    role: Role,
    cfg: ModelConfig,
    obs_dim: usize,
    action_dim: usize,
    params: ParamStore,
    target: ParamStore,
    pub(crate) encoder: Mlp,
    pub(crate) dynamics: Mlp,
    pub(crate) reward: Mlp,
    pub(crate) termination: Mlp,
    pub(crate) qs: Vec<Mlp>,
    pub(crate) policy: Mlp,
}

fn concat(z: &DenseArray, a: &DenseArray) -> Result<DenseArray> {
    DenseArray::concat_cols(&[z, a])
}

impl WorldModel {
    pub fn new(role: Role, cfg: &ModelConfig, obs_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        if cfg.num_q < 2 {
            return Err(Error::config("value ensemble needs at least 2 members"));
        }
        if cfg.log_std_min >= cfg.log_std_max {
            return Err(Error::config("log_std_min must be below log_std_max"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let p = role.prefix();
        let (l, m, za) = (cfg.latent_dim, cfg.mlp_dim, cfg.latent_dim + action_dim);
        let eps = cfg.layer_norm_eps;
        use OutputActivation::*;
        let mut mlp = |name: String, shape: MlpShape, rng: &mut ChaCha8Rng| Mlp::new(&mut params, &name, shape, eps, rng);
        let encoder = mlp(format!("{p}/encoder"), MlpShape::new(obs_dim, &[cfg.encoder_dim], l, Identity), &mut rng)?;
        let dynamics = mlp(format!("{p}/dynamics"), MlpShape::new(za, &[m, m], l, Identity), &mut rng)?;
        let reward = mlp(format!("{p}/reward"), MlpShape::new(za, &[m, m], 1, Identity), &mut rng)?;
        let termination = mlp(format!("{p}/termination"), MlpShape::new(za, &[m, m], 1, Sigmoid), &mut rng)?;
        let qs = (0..cfg.num_q)
            .map(|i| mlp(format!("{p}/q{i}"), MlpShape::new(za, &[m, m], 1, Identity), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let policy = mlp(format!("{p}/policy"), MlpShape::new(l, &[m, m], 2 * action_dim, Identity), &mut rng)?;
        reward.zero_output(&mut params);
        for q in &qs {
            q.zero_output(&mut params);
        }
        let target = params.clone();
        Ok(Self {
            role,
            cfg: cfg.clone(),
            obs_dim,
            action_dim,
            params,
            target,
            encoder,
            dynamics,
            reward,
            termination,
            qs,
            policy,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.cfg.latent_dim
    }

    pub fn num_q(&self) -> usize {
        self.qs.len()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn target_params(&self) -> &ParamStore {
        &self.target
    }

    pub fn target_params_mut(&mut self) -> &mut ParamStore {
        &mut self.target
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn termination_head(&self) -> &Mlp {
        &self.termination
    }

    pub fn encoder_ids(&self) -> Vec<ParamId> {
        self.encoder.param_ids()
    }

    pub fn q_ids(&self) -> Vec<ParamId> {
        self.qs.iter().flat_map(|q| q.param_ids()).collect()
    }

    pub fn policy_ids(&self) -> Vec<ParamId> {
        self.policy.param_ids()
    }

    /// Everything trained by the model loss.
    pub fn model_ids(&self) -> Vec<ParamId> {
        let mut ids = self.encoder.param_ids();
        for m in [&self.dynamics, &self.reward, &self.termination] {
            ids.extend(m.param_ids());
        }
        ids.extend(self.q_ids());
        ids
    }

    /// Validates the channels against the role and flattens them.
    pub fn obs_vector(&self, obs: &Observation) -> Result<Vec<f64>> {
        let (need, have) = match self.role {
            Role::Tracker => ("command", obs.command.is_some() && obs.terrain.is_none()),
            Role::Puppeteer => ("terrain", obs.terrain.is_some() && obs.command.is_none()),
        };
        if !have {
            return Err(Error::config(format!(
                "{} model needs q and {need} channels only",
                self.role.prefix()
            )));
        }
        let v = obs.flatten();
        if v.len() != self.obs_dim {
            return Err(Error::contract(format!("observation has {} dims, model expects {}", v.len(), self.obs_dim)));
        }
        Ok(v)
    }

    pub fn encode(&self, obs: &Observation) -> Result<DenseArray> {
        let v = self.obs_vector(obs)?;
        self.encode_batch(&DenseArray::row(v))
    }

    /// Encodes a `B × obs_dim` batch.
    pub fn encode_batch(&self, obs: &DenseArray) -> Result<DenseArray> {
        self.encoder.forward(&self.params, obs)
    }

    /// One latent step for a batch: next latents, rewards and termination
    /// probabilities.
    pub fn step(&self, z: &DenseArray, a: &DenseArray) -> Result<(DenseArray, Vec<f64>, Vec<f64>)> {
        let za = concat(z, a)?;
        let next = self.dynamics.forward(&self.params, &za)?;
        let r = self.reward.forward(&self.params, &za)?.into_data();
        let d = self.termination.forward(&self.params, &za)?.into_data();
        Ok((next, r, d))
    }

    pub fn rollout_latent(&self, z0: &DenseArray, actions: &[DenseArray]) -> Result<LatentRollout> {
        if actions.is_empty() {
            return Err(Error::contract("rollout horizon must be at least 1"));
        }
        let mut out = LatentRollout {
            latents: Vec::with_capacity(actions.len()),
            rewards: Vec::with_capacity(actions.len()),
            terminations: Vec::with_capacity(actions.len()),
        };
        let mut z = z0.clone();
        for (t, a) in actions.iter().enumerate() {
            let (next, r, d) = self.step(&z, a)?;
            if !next.is_finite() || r.iter().chain(&d).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("latent rollout at step {t}")));
            }
            out.latents.push(next.clone());
            out.rewards.push(r);
            out.terminations.push(d);
            z = next;
        }
        Ok(out)
    }

    /// Pre-squash policy mean and soft-clamped log standard deviation.
    pub fn policy_dist(&self, z: &DenseArray) -> Result<(DenseArray, DenseArray)> {
        let raw = self.policy.forward(&self.params, z)?;
        let a = self.action_dim;
        let mean = raw.slice_cols(0, a);
        let (lo, hi) = (self.cfg.log_std_min, self.cfg.log_std_max);
        let log_std = raw.slice_cols(a, 2 * a).map(|x| soft_clamp(x, lo, hi));
        Ok((mean, log_std))
    }

    /// Squashed policy action `tanh(mean + std · ε)`; `noise = None` gives
    /// the squashed mean.
    pub fn policy_action(&self, z: &DenseArray, noise: Option<&DenseArray>) -> Result<DenseArray> {
        let (mean, log_std) = self.policy_dist(z)?;
        Ok(match noise {
            None => mean.map(f64::tanh),
            Some(eps) => {
                if eps.len() != mean.len() {
                    return Err(Error::contract("policy noise shape mismatch"));
                }
                let std = log_std.map(f64::exp);
                let pre = mean.zip_map(&std.zip_map(eps, |s, e| s * e), |m, n| m + n);
                pre.map(f64::tanh)
            }
        })
    }

    /// `Q_i(z, a)` for one member, online (`target = false`) or target copy.
    pub fn q_value(&self, i: usize, z: &DenseArray, a: &DenseArray, target: bool) -> Result<Vec<f64>> {
        let store = if target { &self.target } else { &self.params };
        Ok(self.qs[i].forward(store, &concat(z, a)?)?.into_data())
    }

    /// Two distinct ensemble indices drawn uniformly.
    pub fn sample_pair(&self, rng: &mut impl Rng) -> (usize, usize) {
        let v = sample(rng, self.qs.len(), 2);
        (v.index(0), v.index(1))
    }

    /// `min(Q̄_i, Q̄_j)(z, p(z))` with the policy's squashed mean action.
    pub fn terminal_value(&self, z: &DenseArray, pair: (usize, usize)) -> Result<Vec<f64>> {
        let a = self.policy_action(z, None)?;
        self.min_target(z, &a, pair)
    }

    fn min_target(&self, z: &DenseArray, a: &DenseArray, pair: (usize, usize)) -> Result<Vec<f64>> {
        let q1 = self.q_value(pair.0, z, a, true)?;
        let q2 = self.q_value(pair.1, z, a, true)?;
        Ok(q1.iter().zip(&q2).map(|(x, y)| x.min(*y)).collect())
    }

    /// Truncated TD targets `y = r + γ (1 − δ) min(Q̄_i, Q̄_j)(z′, ã′)`
    /// where `ã′` is a policy sample drawn with `noise`. Terminal entries
    /// return `r` without touching the target network's output.
    pub fn td_target(
        &self,
        rewards: &[f64],
        terminals: &[f64],
        z_next: &DenseArray,
        pair: (usize, usize),
        noise: &DenseArray,
        discount: f64,
    ) -> Result<Vec<f64>> {
        if rewards.len() != terminals.len() || rewards.len() != z_next.rows() {
            return Err(Error::contract("td_target batch sizes differ"));
        }
        let a = self.policy_action(z_next, Some(noise))?;
        let q = self.min_target(z_next, &a, pair)?;
        Ok(td_combine(rewards, terminals, &q, discount))
    }

    /// Polyak update of the target ensemble: `Q̄ ← m Q̄ + (1 − m) Q`.
    pub fn target_update(&mut self, momentum: f64) {
        for id in self.q_ids() {
            let online = self.params.get(id).data();
            let tgt = self.target.get_mut(id).data_mut();
            for (t, o) in tgt.iter_mut().zip(online) {
                *t += (1.0 - momentum) * (o - *t);
            }
        }
    }

    fn target_block_name(&self, id: ParamId) -> String {
        let name = self.params.name(id);
        let p = self.role.prefix();
        format!("{p}/target/{}", &name[p.len() + 1..])
    }

    /// Writes online parameters followed by the target ensemble.
    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let target_names: Vec<(String, ParamId)> = self.q_ids().into_iter().map(|id| (self.target_block_name(id), id)).collect();
        let mut blocks: Vec<(&str, &DenseArray)> = self.params.blocks().iter().map(|b| (b.name.as_str(), &b.value)).collect();
        for (name, id) in &target_names {
            blocks.push((name.as_str(), self.target.get(*id)));
        }
        let meta = ModelMeta {
            role: self.role,
            obs_dim: self.obs_dim,
            action_dim: self.action_dim,
            model: self.cfg.clone(),
            extra,
        };
        write_blocks(path, CHECKPOINT_FORMAT, &blocks, serde_json::to_value(meta)?)
    }

    /// Loads a checkpoint; returns the model and the caller's extra metadata.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let (blocks, meta) = read_blocks(path, CHECKPOINT_FORMAT)?;
        let meta: ModelMeta = serde_json::from_value(meta).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: format!("bad model metadata: {e}"),
        })?;
        let mut model = Self::new(meta.role, &meta.model, meta.obs_dim, meta.action_dim, 0)?;
        let n_params = model.params.len();
        let target_ids = model.q_ids();
        if blocks.len() != n_params + target_ids.len() {
            return Err(Error::Incompatible(format!(
                "{} holds {} blocks, expected {}",
                path.display(),
                blocks.len(),
                n_params + target_ids.len()
            )));
        }
        let mut it = blocks.into_iter();
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            let (name, arr) = it.next().unwrap();
            model.assign(false, id, &name, arr)?;
        }
        model.target = model.params.clone();
        for id in target_ids {
            let (name, arr) = it.next().unwrap();
            if name != model.target_block_name(id) {
                return Err(Error::Incompatible(format!("unexpected block {name}")));
            }
            model.assign(true, id, &name, arr)?;
        }
        Ok((model, meta.extra))
    }

    fn assign(&mut self, target: bool, id: ParamId, name: &str, arr: DenseArray) -> Result<()> {
        let store = if target { &mut self.target } else { &mut self.params };
        if !target && store.name(id) != name {
            return Err(Error::Incompatible(format!("expected block {}, found {name}", store.name(id))));
        }
        if store.get(id).shape() != arr.shape() {
            return Err(Error::Incompatible(format!(
                "block {name} has shape {:?}, expected {:?}",
                arr.shape(),
                store.get(id).shape()
            )));
        }
        *store.get_mut(id) = arr;
        Ok(())
    }

    /// Errors unless the model matches the given interface.
    pub fn check_interface(&self, role: Role, obs_dim: usize, action_dim: usize) -> Result<()> {
        if self.role != role || self.obs_dim != obs_dim || self.action_dim != action_dim {
            return Err(Error::Incompatible(format!(
                "model is {:?} with obs {} / action {}, needed {:?} with obs {obs_dim} / action {action_dim}",
                self.role, self.obs_dim, self.action_dim, role
            )));
        }
        Ok(())
    }
}

/// `lo + ½ (hi − lo)(tanh x + 1)`.
pub fn soft_clamp(x: f64, lo: f64, hi: f64) -> f64 {
    lo + 0.5 * (hi - lo) * (x.tanh() + 1.0)
}

/// Elementwise `r + γ (1 − δ) q`, short-circuiting terminal entries to `r`.
pub fn td_combine(rewards: &[f64], terminals: &[f64], q: &[f64], discount: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(terminals)
        .zip(q)
        .map(|((&r, &d), &q)| if d >= 1.0 { r } else { r + discount * (1.0 - d) * q })
        .collect()
}
