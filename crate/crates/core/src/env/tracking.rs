use serde::{Deserialize, Serialize};

use crate::config::{EnvConfig, TaskConfig, TaskKind};
use crate::data::ReferenceClip;
use crate::env::physics::{offsets_to_normalized, PuppetState};
use crate::env::{proprio, tracking_distance, tracking_reward, Observation, PuppetEnv, Terrain, ACTION_DIM};
use crate::error::Result;

/// Normalized command built from `frames`: each frame's offsets mapped into
/// the action box and concatenated.
pub fn command_from_frames<'a>(frames: impl IntoIterator<Item = &'a [[f64; 2]; 3]>) -> Vec<f64> {
    frames.into_iter().flat_map(|f| offsets_to_normalized(f)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingStep {
    pub reward: f64,
    /// Mean effector distance to the reference frame just reached.
    pub distance: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Clip-tracking episode on flat ground. Step `t` targets frame `t+1`; the
/// command holds frames `t+1..=t+horizon` (last frame repeated past the end).
#[derive(Clone, Debug)]
pub struct TrackingEnv {
    inner: PuppetEnv,
    clip: ReferenceClip,
    horizon: usize,
    sigma: f64,
}

impl TrackingEnv {
    pub fn new(clip: ReferenceClip, env: &EnvConfig, horizon: usize) -> Self {
        let mut task = TaskConfig::for_task(TaskKind::Stand);
        task.episode_limit = (clip.len() - 1).min(task.episode_limit);
        let state = PuppetState::standing(0.0, 0.0, env.gravity);
        Self {
            inner: PuppetEnv::with_terrain(&task, env, Terrain::flat(), state),
            clip,
            horizon,
            sigma: env.tracking_sigma,
        }
    }

    pub fn clip(&self) -> &ReferenceClip {
        &self.clip
    }

    pub fn state(&self) -> &PuppetState {
        self.inner.state()
    }

    pub fn time(&self) -> usize {
        self.inner.time()
    }

    pub fn is_closed(&self) -> bool {
        self.inner.is_closed()
    }

    /// Number of steps in a full-length episode.
    pub fn episode_len(&self) -> usize {
        self.inner.task().episode_limit
    }

    pub fn command(&self) -> Vec<f64> {
        let t = self.inner.time();
        command_from_frames((1..=self.horizon).map(|i| self.clip.frame(t + i)))
    }

    pub fn observation(&self) -> Observation {
        Observation {
            q: proprio(self.inner.state(), self.inner.terrain()),
            terrain: None,
            command: Some(self.command()),
        }
    }

    /// Scripted PD tracking action toward the next reference frame.
    pub fn scripted_action(&self) -> [f64; ACTION_DIM] {
        scripted_action(self.inner.state(), self.clip.frame(self.inner.time() + 1))
    }

    pub fn step(&mut self, action: &[f64]) -> Result<TrackingStep> {
        let target = *self.clip.frame(self.inner.time() + 1);
        let out = self.inner.step(action)?;
        let offsets = self.inner.state().offsets();
        Ok(TrackingStep {
            reward: tracking_reward(&offsets, &target, self.sigma),
            distance: tracking_distance(&offsets, &target),
            terminated: out.terminated,
            truncated: out.truncated,
        })
    }
}

/// PD tracking controller in normalized action space:
/// `a = n(target) + 0.5 (n(target) - n(current))`, clamped to the box.
pub fn scripted_action(state: &PuppetState, target: &[[f64; 2]; 3]) -> [f64; ACTION_DIM] {
    let tgt = offsets_to_normalized(target);
    let cur = offsets_to_normalized(&state.offsets());
    std::array::from_fn(|i| (tgt[i] + 0.5 * (tgt[i] - cur[i])).clamp(-1.0, 1.0))
}
