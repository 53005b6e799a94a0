//! Reference clips, offline tracking data, online replay and mixed batches.

pub mod clips;
pub mod offline;
pub mod replay;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::DenseArray;
pub use clips::{generate_clips, Gait, GaitParams, ReferenceClip};
pub use offline::{generate_offline_rollouts, scripted_episode, Episode, OfflineDataset};
pub use replay::ReplayBuffer;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Offline { clip: Option<usize> },
    Online,
}

/// Time-major batch of `H`-step windows: `obs` has `H+1` entries of shape
/// `B × obs_dim`; `actions`, `rewards` and `terminals` have `H` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: Vec<DenseArray>,
    pub actions: Vec<DenseArray>,
    pub rewards: Vec<Vec<f64>>,
    pub terminals: Vec<Vec<f64>>,
    pub sources: Vec<Source>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.sources.len()
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn count(&self, online: bool) -> usize {
        self.sources.iter().filter(|s| (**s == Source::Online) == online).count()
    }
}

#[derive(Default)]
struct BatchBuilder {
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    terminals: Vec<Vec<f64>>,
    sources: Vec<Source>,
}

impl BatchBuilder {
    fn new(h: usize) -> Self {
        Self {
            obs: vec![Vec::new(); h + 1],
            actions: vec![Vec::new(); h],
            rewards: vec![Vec::new(); h],
            terminals: vec![Vec::new(); h],
            sources: Vec::new(),
        }
    }

    fn push_step(&mut self, t: usize, obs: &[f64], action: &[f64], reward: f64, terminal: bool) {
        self.obs[t].extend_from_slice(obs);
        self.actions[t].extend_from_slice(action);
        self.rewards[t].push(reward);
        self.terminals[t].push(if terminal { 1.0 } else { 0.0 });
    }

    fn finish(self, obs_dim: usize, action_dim: usize) -> Result<Batch> {
        let b = self.sources.len();
        Ok(Batch {
            obs: self
                .obs
                .into_iter()
                .map(|d| DenseArray::matrix(b, obs_dim, d))
                .collect::<Result<_>>()?,
            actions: self
                .actions
                .into_iter()
                .map(|d| DenseArray::matrix(b, action_dim, d))
                .collect::<Result<_>>()?,
            rewards: self.rewards,
            terminals: self.terminals,
            sources: self.sources,
        })
    }
}

/// Uniform window sampler over an offline dataset: clip, then rollout, then
/// start position.
#[derive(Clone, Debug)]
pub struct OfflineSampler {
    /// Per clip, the indices of episodes long enough for a window.
    by_clip: Vec<(usize, Vec<usize>)>,
    horizon: usize,
}

impl OfflineSampler {
    pub fn new(data: &OfflineDataset, horizon: usize) -> Result<Self> {
        let by_clip: Vec<(usize, Vec<usize>)> = data
            .clips
            .iter()
            .map(|c| {
                let eps = data
                    .episodes
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.clip == Some(c.id) && e.len() >= horizon)
                    .map(|(i, _)| i)
                    .collect();
                (c.id, eps)
            })
            .filter(|(_, eps): &(usize, Vec<usize>)| !eps.is_empty())
            .collect();
        if by_clip.is_empty() {
            return Err(Error::contract("offline dataset has no sampleable windows"));
        }
        Ok(Self { by_clip, horizon })
    }

    pub fn num_clips(&self) -> usize {
        self.by_clip.len()
    }

    fn sample_into(&self, data: &OfflineDataset, rng: &mut impl Rng, out: &mut BatchBuilder) {
        let h = self.horizon;
        let (clip, eps) = &self.by_clip[rng.random_range(0..self.by_clip.len())];
        let ep = &data.episodes[eps[rng.random_range(0..eps.len())]];
        let start = rng.random_range(0..=ep.len() - h);
        for t in 0..h {
            let i = start + t;
            out.push_step(t, &ep.obs[i], &ep.actions[i], ep.rewards[i], ep.terminal_at(i));
        }
        out.obs[h].extend_from_slice(&ep.obs[start + h]);
        out.sources.push(Source::Offline { clip: Some(*clip) });
    }
}

fn sample_online_into(buf: &ReplayBuffer, h: usize, rng: &mut impl Rng, out: &mut BatchBuilder) -> Result<()> {
    let start = buf
        .sample_window(h, rng)
        .ok_or_else(|| Error::contract("replay buffer has no valid window"))?;
    let w = buf.window(start, h);
    for (t, tr) in w.iter().enumerate() {
        out.push_step(t, tr.obs, tr.action, tr.reward, tr.terminated);
    }
    out.obs[h].extend_from_slice(w[h - 1].next_obs);
    out.sources.push(Source::Online);
    Ok(())
}

/// Batch with exactly `round(batch · offline_ratio)` offline windows and the
/// rest online. Falls back to the one available source when the other is
/// missing or cannot yet supply a window.
pub fn sample_mixed_batch(
    offline: Option<(&OfflineDataset, &OfflineSampler)>,
    online: &ReplayBuffer,
    batch: usize,
    offline_ratio: f64,
    horizon: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if batch == 0 || horizon == 0 {
        return Err(Error::contract("batch and horizon must be positive"));
    }
    let online_ready = online.has_window(horizon);
    let mut n_off = match offline {
        Some(_) => (batch as f64 * offline_ratio).round() as usize,
        None => 0,
    };
    if !online_ready && n_off < batch {
        if offline.is_none() {
            return Err(Error::contract("no data source can supply a batch"));
        }
        log::warn!("online buffer not ready; sampling the batch offline only");
        n_off = batch;
    }
    let (obs_dim, action_dim) = match offline {
        Some((d, _)) if n_off > 0 => (d.obs_dim(), d.action_dim()),
        _ => (online.obs_dim(), online.action_dim()),
    };
    let mut out = BatchBuilder::new(horizon);
    if let Some((data, sampler)) = offline {
        for _ in 0..n_off {
            sampler.sample_into(data, rng, &mut out);
        }
    }
    for _ in n_off..batch {
        sample_online_into(online, horizon, rng, &mut out)?;
    }
    out.finish(obs_dim, action_dim)
}
