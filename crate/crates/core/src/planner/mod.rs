//! MPPI over a latent model with policy-prior samples and soft
//! termination truncation of rollout returns.

pub mod stub;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{PlannerConfig, TruncationMode};
use crate::error::{Error, Result};
use crate::numeric::DenseArray;
use crate::world_model::WorldModel;

/// What the planner needs from a model. Batched over rows.
pub trait PlanningModel {
    fn action_dim(&self) -> usize;

    /// Next latents, predicted rewards and termination probabilities.
    fn step(&self, z: &DenseArray, a: &DenseArray) -> Result<(DenseArray, Vec<f64>, Vec<f64>)>;

    /// Squashed policy-prior actions; `noise = None` gives the mean.
    fn policy_action(&self, z: &DenseArray, noise: Option<&DenseArray>) -> Result<DenseArray>;

    /// Bootstrap value at the horizon (min of two sampled target members).
    fn terminal_value(&self, z: &DenseArray, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

impl PlanningModel for WorldModel {
    fn action_dim(&self) -> usize {
        WorldModel::action_dim(self)
    }

    fn step(&self, z: &DenseArray, a: &DenseArray) -> Result<(DenseArray, Vec<f64>, Vec<f64>)> {
        WorldModel::step(self, z, a)
    }

    fn policy_action(&self, z: &DenseArray, noise: Option<&DenseArray>) -> Result<DenseArray> {
        WorldModel::policy_action(self, z, noise)
    }

    fn terminal_value(&self, z: &DenseArray, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let pair = self.sample_pair(rng);
        WorldModel::terminal_value(self, z, pair)
    }
}

/// Per-timestep Gaussian over action sequences, `H × A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSequenceDistribution {
    pub mean: DenseArray,
    pub std: DenseArray,
}

impl ActionSequenceDistribution {
    pub fn initial(horizon: usize, action_dim: usize, std_init: f64) -> Self {
        Self {
            mean: DenseArray::zeros(&[horizon, action_dim]),
            std: DenseArray::filled(&[horizon, action_dim], std_init),
        }
    }

    pub fn horizon(&self) -> usize {
        self.mean.rows()
    }
}

/// Moves the plan one step forward in time; the freed last step restarts
/// at `(0, std_init)`.
pub fn shift_solution(sol: &ActionSequenceDistribution, std_init: f64) -> ActionSequenceDistribution {
    let (h, a) = (sol.mean.rows(), sol.mean.cols());
    let mut out = ActionSequenceDistribution::initial(h, a, std_init);
    for t in 0..h.saturating_sub(1) {
        out.mean.row_slice_mut(t).copy_from_slice(sol.mean.row_slice(t + 1));
        out.std.row_slice_mut(t).copy_from_slice(sol.std.row_slice(t + 1));
    }
    out
}

/// Survival-weighted discounted return of each population member:
/// `Σ_t γᵗ w_t r̂_t + γᴴ w_H V(z_H)` with `w_0 = 1`,
/// `w_{t+1} = max(w_t (1 − δ̂_t), 0)`.
pub fn score_rollouts<M: PlanningModel + ?Sized>(
    model: &M,
    z0: &DenseArray,
    actions: &[DenseArray],
    discount: f64,
    truncation: TruncationMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n = z0.rows();
    let mut z = z0.clone();
    let mut g = vec![0.0; n];
    let mut w = vec![1.0; n];
    let mut disc = 1.0;
    for a in actions {
        let (next, r, d) = model.step(&z, a)?;
        for i in 0..n {
            g[i] += disc * w[i] * r[i];
            if truncation == TruncationMode::Soft {
                w[i] = (w[i] * (1.0 - d[i])).max(0.0);
            }
        }
        disc *= discount;
        z = next;
    }
    let v = model.terminal_value(&z, rng)?;
    for i in 0..n {
        g[i] += disc * w[i] * v[i];
    }
    Ok(g)
}

/// Single-sequence convenience wrapper around [`score_rollouts`].
pub fn score_rollout<M: PlanningModel + ?Sized>(
    model: &M,
    z0: &DenseArray,
    actions: &[Vec<f64>],
    discount: f64,
    truncation: TruncationMode,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let acts: Vec<DenseArray> = actions.iter().map(|a| DenseArray::row(a.clone())).collect();
    Ok(score_rollouts(model, z0, &acts, discount, truncation, rng)?[0])
}

/// Softmax weights `exp(τ (s − max s))`, normalized.
pub fn elite_weights(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (temperature * (s - max)).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.iter().map(|v| v / sum).collect()
}

/// Result of one planning call.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutput {
    pub action: Vec<f64>,
    pub solution: ActionSequenceDistribution,
    /// Best elite score after each iteration.
    pub best_scores: Vec<f64>,
}

fn normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Runs MPPI from latent `z0` (`1 × L`). `prev` is shifted one step to warm
/// start. With `sample_action` the returned action is drawn from the first
/// step's final Gaussian, otherwise it is the mean.
pub fn plan<M: PlanningModel + ?Sized>(
    model: &M,
    z0: &DenseArray,
    prev: Option<&ActionSequenceDistribution>,
    cfg: &PlannerConfig,
    sample_action: bool,
    seed: u64,
) -> Result<PlanOutput> {
    cfg.validate()?;
    if z0.rows() != 1 {
        return Err(Error::contract("plan expects a single latent row"));
    }
    let (h, a_dim, n) = (cfg.horizon, model.action_dim(), cfg.population);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sol = match prev {
        Some(p) if p.mean.shape() == [h, a_dim] => shift_solution(p, cfg.std_init),
        _ => ActionSequenceDistribution::initial(h, a_dim, cfg.std_init),
    };
    let n_prior = cfg.prior_samples;
    let n_sampled = n - n_prior;

    // Policy-prior trajectories, rolled out once per call.
    let mut prior: Vec<DenseArray> = Vec::with_capacity(h);
    if n_prior > 0 {
        let mut z = z0.repeat_rows(n_prior);
        for _ in 0..h {
            let eps = DenseArray::matrix(n_prior, a_dim, normals(n_prior * a_dim, &mut rng))?;
            let a = model.policy_action(&z, Some(&eps))?;
            z = model.step(&z, &a)?.0;
            prior.push(a);
        }
    }

    let z_pop = z0.repeat_rows(n);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut best_scores = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        // Population, time-major: rows [0, n_sampled) from the Gaussian,
        // the rest from the prior.
        let mut actions: Vec<DenseArray> = Vec::with_capacity(h);
        for t in 0..h {
            let mut data = Vec::with_capacity(n * a_dim);
            let (mu, sd) = (sol.mean.row_slice(t), sol.std.row_slice(t));
            let eps = normals(n_sampled * a_dim, &mut rng);
            for i in 0..n_sampled {
                for j in 0..a_dim {
                    data.push((mu[j] + sd[j] * eps[i * a_dim + j]).clamp(-1.0, 1.0));
                }
            }
            if n_prior > 0 {
                data.extend_from_slice(prior[t].data());
            }
            actions.push(DenseArray::matrix(n, a_dim, data)?);
        }
        // Carry the best sequence so far into slot 0.
        if let (Some((_, seq)), true) = (&best, n_sampled > 0) {
            for t in 0..h {
                actions[t].row_slice_mut(0).copy_from_slice(&seq[t]);
            }
        }
        let scores = score_rollouts(model, &z_pop, &actions, cfg.discount, cfg.truncation, &mut rng)?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("planner rollout score".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
        let elites = &order[..cfg.elites];
        let elite_scores: Vec<f64> = elites.iter().map(|&i| scores[i]).collect();
        let w = elite_weights(&elite_scores, cfg.temperature);
        for t in 0..h {
            let rows: Vec<&[f64]> = elites.iter().map(|&i| actions[t].row_slice(i)).collect();
            for j in 0..a_dim {
                let m: f64 = rows.iter().zip(&w).map(|(r, wi)| wi * r[j]).sum();
                let var: f64 = rows.iter().zip(&w).map(|(r, wi)| wi * (r[j] - m) * (r[j] - m)).sum();
                sol.mean.row_slice_mut(t)[j] = m.clamp(-1.0, 1.0);
                sol.std.row_slice_mut(t)[j] = var.sqrt().clamp(cfg.std_floor, cfg.std_max);
            }
        }
        let top = elites[0];
        if best.as_ref().is_none_or(|(s, _)| scores[top] >= *s) {
            best = Some((scores[top], (0..h).map(|t| actions[t].row_slice(top).to_vec()).collect()));
        }
        best_scores.push(scores[top]);
    }

    let mu = sol.mean.row_slice(0);
    let action = if sample_action {
        let sd = sol.std.row_slice(0);
        let eps = normals(a_dim, &mut rng);
        (0..a_dim).map(|j| (mu[j] + sd[j] * eps[j]).clamp(-1.0, 1.0)).collect()
    } else {
        mu.to_vec()
    };
    Ok(PlanOutput {
        action,
        solution: sol,
        best_scores,
    })
}
