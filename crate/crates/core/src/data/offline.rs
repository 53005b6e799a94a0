use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::data::clips::{GaitParams, ReferenceClip};
use crate::env::{TrackingEnv, ACTION_DIM};
use crate::error::{Error, Result};
use crate::numeric::checkpoint::{read_blocks, write_blocks};
use crate::numeric::DenseArray;

pub const DATASET_FORMAT: &str = "puppeteer-dataset";

/// One recorded episode: `obs` has one more row than `actions`.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub clip: Option<usize>,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Whether the final transition ended by termination.
    pub terminated: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn terminal_at(&self, t: usize) -> bool {
        self.terminated && t + 1 == self.len()
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub clips: Vec<ReferenceClip>,
    pub episodes: Vec<Episode>,
    pub horizon: usize,
}

#[derive(Serialize, Deserialize)]
struct ClipMeta {
    id: usize,
    params: GaitParams,
    torso_velocity: f64,
}

#[derive(Serialize, Deserialize)]
struct EpisodeMeta {
    clip: Option<usize>,
    terminated: bool,
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    horizon: usize,
    clips: Vec<ClipMeta>,
    episodes: Vec<EpisodeMeta>,
}

impl OfflineDataset {
    pub fn obs_dim(&self) -> usize {
        self.episodes.first().map_or(0, |e| e.obs[0].len())
    }

    pub fn action_dim(&self) -> usize {
        self.episodes.iter().find_map(|e| e.actions.first()).map_or(0, |a| a.len())
    }

    /// Keeps the first `ceil(fraction · clips)` clips and their rollouts.
    pub fn subset(&self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!("data fraction {fraction} outside (0, 1]")));
        }
        let keep = ((fraction * self.clips.len() as f64).ceil() as usize).max(1);
        let clips: Vec<ReferenceClip> = self.clips[..keep].to_vec();
        let ids: Vec<usize> = clips.iter().map(|c| c.id).collect();
        let episodes = self
            .episodes
            .iter()
            .filter(|e| e.clip.is_some_and(|c| ids.contains(&c)))
            .cloned()
            .collect();
        Ok(Self {
            clips,
            episodes,
            horizon: self.horizon,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut arrays: Vec<(String, DenseArray)> = Vec::new();
        for c in &self.clips {
            let flat: Vec<f64> = c.frames.iter().flatten().flatten().copied().collect();
            arrays.push((format!("clip/{}/frames", c.id), DenseArray::matrix(c.len(), 6, flat)?));
        }
        for (i, e) in self.episodes.iter().enumerate() {
            let rows = |v: &Vec<Vec<f64>>| DenseArray::stack_rows(&v.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
            arrays.push((format!("episode/{i}/obs"), rows(&e.obs)?));
            arrays.push((format!("episode/{i}/actions"), rows(&e.actions)?));
            arrays.push((format!("episode/{i}/rewards"), DenseArray::row(e.rewards.clone())));
        }
        let meta = DatasetMeta {
            horizon: self.horizon,
            clips: self
                .clips
                .iter()
                .map(|c| ClipMeta {
                    id: c.id,
                    params: c.params.clone(),
                    torso_velocity: c.torso_velocity.first().copied().unwrap_or(0.0),
                })
                .collect(),
            episodes: self
                .episodes
                .iter()
                .map(|e| EpisodeMeta {
                    clip: e.clip,
                    terminated: e.terminated,
                })
                .collect(),
        };
        let blocks: Vec<(&str, &DenseArray)> = arrays.iter().map(|(n, a)| (n.as_str(), a)).collect();
        write_blocks(path, DATASET_FORMAT, &blocks, serde_json::to_value(meta)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (blocks, meta) = read_blocks(path, DATASET_FORMAT)?;
        let bad = |msg: String| Error::Format {
            path: path.to_path_buf(),
            msg,
        };
        let meta: DatasetMeta = serde_json::from_value(meta).map_err(|e| bad(format!("bad dataset meta: {e}")))?;
        let expected = meta.clips.len() + 3 * meta.episodes.len();
        if blocks.len() != expected {
            return Err(bad(format!("expected {expected} blocks, found {}", blocks.len())));
        }
        let mut it = blocks.into_iter();
        let mut clips = Vec::with_capacity(meta.clips.len());
        for cm in meta.clips {
            let (_, arr) = it.next().unwrap();
            if arr.shape().len() != 2 || arr.cols() != 6 {
                return Err(bad(format!("clip {} frames have shape {:?}", cm.id, arr.shape())));
            }
            let frames = (0..arr.rows())
                .map(|r| {
                    let s = arr.row_slice(r);
                    [[s[0], s[1]], [s[2], s[3]], [s[4], s[5]]]
                })
                .collect::<Vec<_>>();
            clips.push(ReferenceClip {
                id: cm.id,
                params: cm.params,
                torso_velocity: vec![cm.torso_velocity; frames.len()],
                frames,
            });
        }
        let to_rows = |a: &DenseArray| (0..a.rows()).map(|r| a.row_slice(r).to_vec()).collect::<Vec<_>>();
        let mut episodes = Vec::with_capacity(meta.episodes.len());
        for em in meta.episodes {
            let (_, obs) = it.next().unwrap();
            let (_, actions) = it.next().unwrap();
            let (_, rewards) = it.next().unwrap();
            if obs.rows() != actions.rows() + 1 || rewards.len() != actions.rows() {
                return Err(bad("episode arrays have inconsistent lengths".into()));
            }
            episodes.push(Episode {
                clip: em.clip,
                obs: to_rows(&obs),
                actions: to_rows(&actions),
                rewards: rewards.into_data(),
                terminated: em.terminated,
            });
        }
        Ok(Self {
            clips,
            episodes,
            horizon: meta.horizon,
        })
    }
}

/// Records one episode of `env` driven by the scripted controller with
/// Gaussian action noise of standard deviation `noise_scale`.
pub fn scripted_episode(mut env: TrackingEnv, noise_scale: f64, rng: &mut ChaCha8Rng) -> Result<Episode> {
    let normal = Normal::new(0.0, noise_scale.max(0.0)).map_err(|e| Error::contract(e.to_string()))?;
    let mut ep = Episode {
        clip: Some(env.clip().id),
        obs: vec![env.observation().flatten()],
        actions: Vec::new(),
        rewards: Vec::new(),
        terminated: false,
    };
    while !env.is_closed() {
        let mut a = env.scripted_action();
        if noise_scale > 0.0 {
            for v in a.iter_mut() {
                *v = (*v + normal.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        let out = env.step(&a)?;
        ep.actions.push(a.to_vec());
        ep.rewards.push(out.reward);
        ep.obs.push(env.observation().flatten());
        ep.terminated = out.terminated;
    }
    Ok(ep)
}

/// `rollouts` noisy scripted-controller episodes per clip, labeled with the
/// tracking reward, carrying the `horizon`-frame command channel.
pub fn generate_offline_rollouts(
    clips: &[ReferenceClip],
    env: &EnvConfig,
    horizon: usize,
    rollouts: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<OfflineDataset> {
    if clips.is_empty() || rollouts == 0 {
        return Err(Error::contract("need at least one clip and one rollout"));
    }
    if clips.iter().any(|c| c.len() < horizon + 1) {
        return Err(Error::contract("every clip needs at least horizon + 1 frames"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(clips.len() * rollouts);
    for clip in clips {
        for _ in 0..rollouts {
            let mut ep_rng = ChaCha8Rng::seed_from_u64(rng.random());
            let tenv = TrackingEnv::new(clip.clone(), env, horizon);
            episodes.push(scripted_episode(tenv, noise_scale, &mut ep_rng)?);
        }
    }
    debug_assert!(episodes.iter().all(|e| e.actions.iter().all(|a| a.len() == ACTION_DIM)));
    Ok(OfflineDataset {
        clips: clips.to_vec(),
        episodes,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::clips::generate_clips;
    use crate::env::tracking::command_from_frames;
    use crate::env::PROPRIO_DIM;

    fn small(noise: f64, seed: u64) -> OfflineDataset {
        let clips = generate_clips(4, 30, 40, 0.02, 1).unwrap();
        generate_offline_rollouts(&clips, &EnvConfig::default(), 3, 3, noise, seed).unwrap()
    }

    #[test]
    fn zero_noise_rollouts_are_identical() {
        let d = small(0.0, 0);
        for c in 0..4 {
            let eps: Vec<&Episode> = d.episodes.iter().filter(|e| e.clip == Some(c)).collect();
            assert_eq!(eps.len(), 3);
            assert!(eps.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn commands_are_future_frames() {
        let d = small(0.2, 0);
        for e in &d.episodes {
            let clip = &d.clips[e.clip.unwrap()];
            for (t, o) in e.obs.iter().enumerate() {
                let expect = command_from_frames((1..=3).map(|i| clip.frame(t + i)));
                assert_eq!(&o[PROPRIO_DIM..], expect.as_slice());
            }
        }
    }

    #[test]
    fn mean_reward_drops_with_noise() {
        let clips = generate_clips(8, 100, 120, 0.02, 2).unwrap();
        let env = EnvConfig::default();
        let mean = |noise| {
            let d = generate_offline_rollouts(&clips, &env, 3, 20, noise, 9).unwrap();
            let (s, n) = d
                .episodes
                .iter()
                .fold((0.0, 0usize), |(s, n), e| (s + e.rewards.iter().sum::<f64>(), n + e.len()));
            s / n as f64
        };
        let (a, b, c) = (mean(0.0), mean(0.1), mean(0.3));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.json");
        let d = small(0.2, 4);
        d.write(&p).unwrap();
        assert_eq!(OfflineDataset::read(&p).unwrap(), d);
    }

    #[test]
    fn corrupt_magic_and_version_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.json");
        small(0.0, 4).write(&p).unwrap();
        let bp = crate::numeric::checkpoint::blob_path(&p);
        let mut blob = std::fs::read(&bp).unwrap();
        blob[0] = b'X';
        std::fs::write(&bp, &blob).unwrap();
        assert!(matches!(OfflineDataset::read(&p), Err(Error::Format { .. })));
        small(0.0, 4).write(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replace("\"v1\"", "\"v0\"");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(OfflineDataset::read(&p), Err(Error::Version { .. })));
    }

    #[test]
    fn subset_keeps_leading_clips() {
        let d = small(0.0, 0);
        let s = d.subset(0.25).unwrap();
        assert_eq!(s.clips.len(), 1);
        assert_eq!(s.episodes.len(), 3);
        assert!(d.subset(0.0).is_err());
    }
}
