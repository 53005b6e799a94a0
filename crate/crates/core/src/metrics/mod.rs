//! Clip-tracking quality metrics and naturalness proxies.

pub mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::data::ReferenceClip;
use crate::env::{EpisodeResult, TrackingEnv, ACTION_DIM};
use crate::error::{Error, Result};

/// Steps evaluated per clip; longer clips are truncated.
pub const METRIC_STEPS: usize = 100;
/// Largest per-step mean effector distance still counted as tracking, metres.
pub const SUCCESS_THRESHOLD: f64 = 0.5;

/// Anything that acts in a [`TrackingEnv`].
pub trait TrackingPolicy {
    /// Called before each clip.
    fn reset(&mut self) {}
    fn act(&mut self, env: &TrackingEnv) -> Result<Vec<f64>>;
}

/// Scripted PD controller, optionally with Gaussian action noise.
pub struct ScriptedTracker {
    noise: f64,
    rng: ChaCha8Rng,
}

impl ScriptedTracker {
    pub fn new(noise: f64, seed: u64) -> Self {
        Self {
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl TrackingPolicy for ScriptedTracker {
    fn act(&mut self, env: &TrackingEnv) -> Result<Vec<f64>> {
        let mut a = env.scripted_action().to_vec();
        if self.noise > 0.0 {
            for v in &mut a {
                let n: f64 = self.rng.sample(rand_distr::StandardNormal);
                *v = (*v + self.noise * n).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }
}

/// Uniform random actions in the box.
pub struct RandomTracker {
    rng: ChaCha8Rng,
}

impl RandomTracker {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl TrackingPolicy for RandomTracker {
    fn act(&mut self, _env: &TrackingEnv) -> Result<Vec<f64>> {
        Ok((0..ACTION_DIM).map(|_| self.rng.random_range(-1.0..=1.0)).collect())
    }
}

/// Per-step record of one clip evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRollout {
    pub clip: usize,
    pub distances: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Steps the clip asked for (`min(METRIC_STEPS, clip steps)`).
    pub expected_steps: usize,
}

impl ClipRollout {
    pub fn succeeded(&self) -> bool {
        self.distances.len() == self.expected_steps && self.distances.iter().all(|&d| d <= SUCCESS_THRESHOLD)
    }
}

/// Rolls `policy` over each clip for at most [`METRIC_STEPS`] steps.
pub fn rollout_clips(
    policy: &mut dyn TrackingPolicy,
    clips: &[ReferenceClip],
    env: &EnvConfig,
    horizon: usize,
) -> Result<Vec<ClipRollout>> {
    clips
        .iter()
        .map(|clip| {
            let mut tenv = TrackingEnv::new(clip.clone(), env, horizon);
            let expected = tenv.episode_len().min(METRIC_STEPS);
            policy.reset();
            let mut r = ClipRollout {
                clip: clip.id,
                distances: Vec::with_capacity(expected),
                rewards: Vec::with_capacity(expected),
                expected_steps: expected,
            };
            while r.distances.len() < expected && !tenv.is_closed() {
                let a = policy.act(&tenv)?;
                let out = tenv.step(&a)?;
                r.distances.push(out.distance);
                r.rewards.push(out.reward);
            }
            Ok(r)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Percentage of clips tracked within threshold for every step.
    pub success_rate: f64,
    /// Mean effector distance over steps and clips, metres.
    pub tracking_error: f64,
    /// Mean summed tracking reward per clip.
    pub comic_score: f64,
}

fn non_empty(r: &[ClipRollout]) -> Result<()> {
    if r.is_empty() {
        return Err(Error::contract("tracking metrics need at least one clip"));
    }
    Ok(())
}

pub fn success_rate(rollouts: &[ClipRollout]) -> Result<f64> {
    non_empty(rollouts)?;
    Ok(100.0 * rollouts.iter().filter(|r| r.succeeded()).count() as f64 / rollouts.len() as f64)
}

/// Mean over clips of each clip's per-step mean distance.
pub fn tracking_error(rollouts: &[ClipRollout]) -> Result<f64> {
    non_empty(rollouts)?;
    let per_clip = rollouts.iter().map(|r| {
        if r.distances.is_empty() {
            0.0
        } else {
            r.distances.iter().sum::<f64>() / r.distances.len() as f64
        }
    });
    Ok(per_clip.sum::<f64>() / rollouts.len() as f64)
}

pub fn comic_score(rollouts: &[ClipRollout]) -> Result<f64> {
    non_empty(rollouts)?;
    Ok(rollouts.iter().map(|r| r.rewards.iter().sum::<f64>()).sum::<f64>() / rollouts.len() as f64)
}

impl TrackingMetrics {
    pub fn from_rollouts(rollouts: &[ClipRollout]) -> Result<Self> {
        Ok(Self {
            success_rate: success_rate(rollouts)?,
            tracking_error: tracking_error(rollouts)?,
            comic_score: comic_score(rollouts)?,
        })
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// One row of the naturalness table; `_std` columns are across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalnessRow {
    pub method: String,
    #[serde(rename = "eplen@ckpt")]
    pub eplen_ckpt: f64,
    #[serde(rename = "eplen@ckpt_std")]
    pub eplen_ckpt_std: f64,
    pub eplen: f64,
    pub eplen_std: f64,
    pub height: f64,
    pub height_std: f64,
}

/// Evaluation results of one method: per seed, the episodes at the
/// intermediate checkpoint and at the end of training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodResults {
    pub method: String,
    pub at_checkpoint: Vec<Vec<EpisodeResult>>,
    pub at_end: Vec<Vec<EpisodeResult>>,
}

fn per_seed(runs: &[Vec<EpisodeResult>], f: impl Fn(&EpisodeResult) -> f64) -> Vec<f64> {
    runs.iter()
        .filter(|eps| !eps.is_empty())
        .map(|eps| eps.iter().map(&f).sum::<f64>() / eps.len() as f64)
        .collect()
}

pub fn naturalness_proxies(results: &MethodResults) -> NaturalnessRow {
    let (eplen_ckpt, eplen_ckpt_std) = mean_std(&per_seed(&results.at_checkpoint, |e| e.length as f64));
    let (eplen, eplen_std) = mean_std(&per_seed(&results.at_end, |e| e.length as f64));
    let (height, height_std) = mean_std(&per_seed(&results.at_end, |e| e.mean_torso_height));
    NaturalnessRow {
        method: results.method.clone(),
        eplen_ckpt,
        eplen_ckpt_std,
        eplen,
        eplen_std,
        height,
        height_std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::clips::{GaitParams, Gait};

    fn rollout(d: &[f64], expected: usize) -> ClipRollout {
        ClipRollout {
            clip: 0,
            distances: d.to_vec(),
            rewards: d.iter().map(|x| (-x * x / 0.18).exp()).collect(),
            expected_steps: expected,
        }
    }

    #[test]
    fn perfect_tracking() {
        let r = vec![rollout(&[0.0; 100], 100); 3];
        let m = TrackingMetrics::from_rollouts(&r).unwrap();
        assert_eq!(m.success_rate, 100.0);
        assert_eq!(m.tracking_error, 0.0);
        assert_eq!(m.comic_score, 100.0);
    }

    #[test]
    fn threshold_breach_fails_every_clip() {
        let mut d = vec![0.0; 100];
        d[1] = 0.51;
        assert_eq!(success_rate(&vec![rollout(&d, 100); 4]).unwrap(), 0.0);
        d[1] = 0.5;
        assert_eq!(success_rate(&vec![rollout(&d, 100); 4]).unwrap(), 100.0);
    }

    #[test]
    fn early_termination_is_failure() {
        assert_eq!(success_rate(&[rollout(&[0.0; 40], 100)]).unwrap(), 0.0);
    }

    #[test]
    fn one_effector_offset_averages() {
        let e = crate::env::tracking_distance(
            &[[0.2, 0.0], [0.0, 0.0], [0.0, 0.0]],
            &[[0.0; 2]; 3],
        );
        let m = tracking_error(&[rollout(&vec![e; 10], 10)]).unwrap();
        assert!((m - 0.2 / 3.0).abs() < 1e-15);
        assert!((m - 0.0667).abs() < 1e-4);
    }

    #[test]
    fn long_clips_are_truncated_and_short_clips_bounded() {
        let env = EnvConfig::default();
        let params = GaitParams {
            gait: Gait::Stand,
            period: 20,
            stride: 0.0,
            lift: 0.0,
            lean: 0.0,
        };
        let long = ReferenceClip::from_params(0, params.clone(), 250, env.dt).unwrap();
        let short = ReferenceClip::from_params(1, params, 50, env.dt).unwrap();
        let r = rollout_clips(&mut ScriptedTracker::new(0.0, 0), &[long, short], &env, 3).unwrap();
        assert_eq!(r[0].distances.len(), 100);
        assert!(r[1].rewards.len() <= 50);
        assert!(r[1].rewards.iter().sum::<f64>() <= 50.0);
    }

    #[test]
    fn empty_clip_set_is_rejected() {
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn naturalness_aggregates() {
        let ep = |len, h| EpisodeResult {
            episode_return: 0.0,
            length: len,
            terminated_early: false,
            mean_torso_height: h,
        };
        let res = MethodResults {
            method: "ours".into(),
            at_checkpoint: vec![vec![ep(500, 0.96); 3]; 2],
            at_end: vec![vec![ep(500, 0.96), ep(500, 0.96)], vec![ep(500, 0.96)]],
        };
        let row = naturalness_proxies(&res);
        assert_eq!(row.eplen, 500.0);
        assert_eq!(row.eplen_ckpt, 500.0);
        assert!((row.height - 0.96).abs() < 1e-15);
        assert_eq!(row.height_std, 0.0);
    }
}
