use serde::{Deserialize, Serialize};

use crate::config::OptimConfig;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::numeric::{DenseArray, Gradients, ParamStore, Tape, Var};
use crate::world_model::WorldModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub consistency: f64,
    pub reward: f64,
    pub value: f64,
    pub termination: f64,
    pub temporal: f64,
    pub entropy: f64,
}

impl LossWeights {
    pub fn from_config(c: &OptimConfig) -> Self {
        Self {
            consistency: c.consistency_coef,
            reward: c.reward_coef,
            value: c.value_coef,
            termination: c.termination_coef,
            temporal: c.temporal_coef,
            entropy: c.entropy_coef,
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::from_config(&OptimConfig::default())
    }
}

/// Temporally weighted, coefficient-scaled loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub consistency: f64,
    pub reward: f64,
    pub value: f64,
    pub termination: f64,
    /// Consistency + reward + value, accumulated in the same order as the total.
    pub composite: f64,
    pub total: f64,
}

/// Gradient-free inputs to the model loss: encoder latents of `s_{t+1}`
/// (consistency targets) and TD targets, both from the pre-update model.
#[derive(Clone, Debug)]
pub struct ModelTargets {
    pub next_latents: Vec<DenseArray>,
    pub td: Vec<Vec<f64>>,
}

pub(crate) struct ModelLossGraph {
    pub tape: Tape,
    pub loss: Var,
    pub terms: LossTerms,
    /// Rolled-out latents `z_0..z_H` (values only).
    pub latents: Vec<DenseArray>,
}

impl WorldModel {
    /// Records the joint model loss of a batch on a fresh tape, reading
    /// parameters from `store`.
    pub(crate) fn model_loss_graph(
        &self,
        store: &ParamStore,
        batch: &Batch,
        targets: &ModelTargets,
        w: &LossWeights,
    ) -> Result<ModelLossGraph> {
        let h = batch.horizon();
        if h == 0 || targets.td.len() != h || targets.next_latents.len() != h || batch.obs.len() != h + 1 {
            return Err(Error::contract("model loss needs H actions, H targets and H+1 observations"));
        }
        let b = batch.size() as f64;
        let mut tape = Tape::new();
        let obs0 = tape.constant(batch.obs[0].clone());
        let mut z = self.encoder.forward_tape(store, &mut tape, obs0, true)?;
        let mut latents = vec![tape.value(z).clone()];
        let mut total: Option<Var> = None;
        let mut terms = LossTerms::default();
        let mut weight = 1.0;
        for t in 0..h {
            let a = tape.constant(batch.actions[t].clone());
            let za = tape.concat_cols(&[z, a])?;
            let pred = self.dynamics.forward_tape(store, &mut tape, za, true)?;
            let next_target = tape.constant(targets.next_latents[t].clone());
            let diff = tape.sub(pred, next_target)?;
            let sq = tape.square(diff);
            let per_row = tape.sum_cols(sq);
            let cons = tape.sum(per_row);
            let cons = tape.scale(cons, w.consistency / b);

            let r_hat = self.reward.forward_tape(store, &mut tape, za, true)?;
            let r = tape.constant(DenseArray::matrix(batch.size(), 1, batch.rewards[t].clone())?);
            let rd = tape.sub(r_hat, r)?;
            let rsq = tape.square(rd);
            let rew = tape.sum(rsq);
            let rew = tape.scale(rew, w.reward / b);

            let y = tape.constant(DenseArray::matrix(batch.size(), 1, targets.td[t].clone())?);
            let mut val: Option<Var> = None;
            for q in &self.qs {
                let qv = q.forward_tape(store, &mut tape, za, true)?;
                let d = tape.sub(qv, y)?;
                let s = tape.square(d);
                let s = tape.sum(s);
                val = Some(match val {
                    None => s,
                    Some(acc) => tape.add(acc, s)?,
                });
            }
            let val = tape.scale(val.unwrap(), w.value / b);

            let logits = self.termination.forward_tape_logits(store, &mut tape, za, true)?;
            let delta = DenseArray::matrix(batch.size(), 1, batch.terminals[t].clone())?;
            let ce = tape.bce_with_logits(logits, delta)?;
            let ce = tape.sum(ce);
            let ce = tape.scale(ce, w.termination / b);

            let vals = [cons, rew, val, ce].map(|v| tape.value(v).item());
            for (name, v) in ["consistency", "reward", "value", "termination"].iter().zip(vals) {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("model loss {name} term at t={t}")));
                }
            }
            terms.consistency += weight * vals[0];
            terms.reward += weight * vals[1];
            terms.value += weight * vals[2];
            terms.termination += weight * vals[3];
            terms.composite += weight * ((vals[0] + vals[1]) + vals[2]);

            let step = tape.add(cons, rew)?;
            let step = tape.add(step, val)?;
            let step = tape.add(step, ce)?;
            let step = tape.scale(step, weight);
            total = Some(match total {
                None => step,
                Some(acc) => tape.add(acc, step)?,
            });
            z = pred;
            latents.push(tape.value(z).clone());
            weight *= w.temporal;
        }
        let loss = total.unwrap();
        terms.total = tape.value(loss).item();
        Ok(ModelLossGraph {
            tape,
            loss,
            terms,
            latents,
        })
    }

    /// Joint model loss value and gradients with respect to the online
    /// parameters.
    pub fn model_loss(&self, batch: &Batch, targets: &ModelTargets, w: &LossWeights) -> Result<(LossTerms, Gradients)> {
        let g = self.model_loss_graph(self.params(), batch, targets, w)?;
        let grads = g.tape.backward(g.loss)?;
        Ok((g.terms, grads))
    }

    /// Loss value only, with parameters taken from `store`.
    pub fn model_loss_value(&self, store: &ParamStore, batch: &Batch, targets: &ModelTargets, w: &LossWeights) -> Result<f64> {
        Ok(self.model_loss_graph(store, batch, targets, w)?.terms.total)
    }

    /// Encodes every `s_{t+1}` with the online encoder and forms the TD
    /// targets there. `noise[t]` drives the policy sample at `z_{t+1}`.
    pub fn model_targets(
        &self,
        batch: &Batch,
        pair: (usize, usize),
        noise: &[DenseArray],
        discount: f64,
    ) -> Result<ModelTargets> {
        let mut out = ModelTargets {
            next_latents: Vec::with_capacity(batch.horizon()),
            td: Vec::with_capacity(batch.horizon()),
        };
        for t in 0..batch.horizon() {
            let z_next = self.encode_batch(&batch.obs[t + 1])?;
            out.td.push(self.td_target(&batch.rewards[t], &batch.terminals[t], &z_next, pair, &noise[t], discount)?);
            out.next_latents.push(z_next);
        }
        Ok(out)
    }

    /// Records the policy-prior loss over detached latents. Returns the tape,
    /// the loss node and the per-step mean ensemble Q values (before
    /// normalization) for the running scale.
    pub(crate) fn policy_loss_graph(
        &self,
        store: &ParamStore,
        latents: &[DenseArray],
        noise: &[DenseArray],
        scale: f64,
        w: &LossWeights,
    ) -> Result<(Tape, Var, Vec<f64>)> {
        let a_dim = self.action_dim();
        let (lo, hi) = (self.config().log_std_min, self.config().log_std_max);
        let mut tape = Tape::new();
        let mut total: Option<Var> = None;
        let mut qs_out = Vec::new();
        let mut weight = 1.0;
        let mut weight_sum = 0.0;
        for (z, eps) in latents.iter().zip(noise) {
            let b = z.rows() as f64;
            let zv = tape.constant(z.clone());
            let raw = self.policy.forward_tape(store, &mut tape, zv, true)?;
            let mean = tape.slice_cols(raw, 0, a_dim)?;
            let x = tape.slice_cols(raw, a_dim, 2 * a_dim)?;
            let th = tape.tanh(x);
            let th = tape.add_scalar(th, 1.0);
            let ls = tape.scale(th, 0.5 * (hi - lo));
            let log_std = tape.add_scalar(ls, lo);
            let std = tape.exp(log_std);
            let n = tape.mul_const(std, eps.clone())?;
            let pre = tape.add(mean, n)?;
            let act = tape.tanh(pre);
            let za = tape.concat_cols(&[zv, act])?;
            let mut qsum: Option<Var> = None;
            for q in &self.qs {
                let v = q.forward_tape(self.params(), &mut tape, za, false)?;
                qsum = Some(match qsum {
                    None => v,
                    Some(acc) => tape.add(acc, v)?,
                });
            }
            let qmean = tape.scale(qsum.unwrap(), 1.0 / self.qs.len() as f64);
            qs_out.extend_from_slice(tape.value(qmean).data());
            let qterm = tape.sum(qmean);
            let qterm = tape.scale(qterm, -1.0 / (scale * b));
            let ent = tape.sum(log_std);
            let ent = tape.scale(ent, -w.entropy / b);
            let step = tape.add(qterm, ent)?;
            let step = tape.scale(step, weight);
            total = Some(match total {
                None => step,
                Some(acc) => tape.add(acc, step)?,
            });
            weight_sum += weight;
            weight *= w.temporal;
        }
        let total = total.ok_or_else(|| Error::contract("policy loss needs at least one latent batch"))?;
        let loss = tape.scale(total, 1.0 / weight_sum);
        if !tape.value(loss).item().is_finite() {
            return Err(Error::NonFinite("policy prior loss".into()));
        }
        Ok((tape, loss, qs_out))
    }
}

/// Linear-interpolated 5th-to-95th percentile spread.
pub fn percentile_range(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (i, f) = (pos.floor() as usize, pos.fract());
        if i + 1 < v.len() {
            v[i] + f * (v[i + 1] - v[i])
        } else {
            v[i]
        }
    };
    q(0.95) - q(0.05)
}

/// Exponential moving average of the Q percentile range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningScale {
    pub value: f64,
    pub rate: f64,
}

impl RunningScale {
    pub fn new(rate: f64) -> Self {
        Self { value: 1.0, rate }
    }

    pub fn update(&mut self, values: &[f64]) {
        let r = percentile_range(values);
        self.value += self.rate * (r - self.value);
    }

    /// Divisor applied to Q values; 1 when the range is degenerate.
    pub fn divisor(&self) -> f64 {
        if self.value < 1e-6 {
            1.0
        } else {
            self.value
        }
    }
}

/// Policy objective on precomputed quantities:
/// `−mean(q)/scale − entropy_coef · mean(Σ log_std)`.
pub fn policy_objective(q: &[f64], log_std_sums: &[f64], scale: f64, entropy_coef: f64) -> f64 {
    let n = q.len() as f64;
    -q.iter().sum::<f64>() / (scale * n) - entropy_coef * log_std_sums.iter().sum::<f64>() / n
}
