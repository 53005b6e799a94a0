//! Deterministic 2D puppet-on-terrain task suite.

pub mod physics;
pub mod terrain;
pub mod tracking;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EnvConfig, TaskConfig};
use crate::error::{Error, Result};
pub use physics::{PuppetState, ACTION_DIM, NUM_EFFECTORS};
pub use terrain::{Terrain, TerrainFeature, FEATURE_LEN};
pub use tracking::{TrackingEnv, TrackingStep};

/// Width of the proprioceptive vector `q`.
pub const PROPRIO_DIM: usize = 1 + 2 + 4 * NUM_EFFECTORS + NUM_EFFECTORS;

/// Observation channels. The tracker sees `q` and `command`; the puppeteer
/// sees `q` and `terrain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub q: Vec<f64>,
    pub terrain: Option<Vec<f64>>,
    pub command: Option<Vec<f64>>,
}

impl Observation {
    /// `q` followed by whichever of terrain and command are present.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.q.clone();
        if let Some(v) = &self.terrain {
            out.extend_from_slice(v);
        }
        if let Some(c) = &self.command {
            out.extend_from_slice(c);
        }
        out
    }
}

/// Proprioception: torso height above support, torso velocity, effector
/// offsets and their velocities relative to the torso, effector contacts.
pub fn proprio(state: &PuppetState, terrain: &Terrain) -> Vec<f64> {
    let mut q = Vec::with_capacity(PROPRIO_DIM);
    let t = state.torso();
    q.push(t[1] - terrain.support_height(t[0]));
    q.extend_from_slice(&state.torso_vel());
    for o in state.offsets() {
        q.extend_from_slice(&o);
    }
    for v in state.offset_velocities() {
        q.extend_from_slice(&v);
    }
    for c in &state.contact[1..] {
        q.push(if *c { 1.0 } else { 0.0 });
    }
    q
}

/// Forward-velocity reward of the terrain tasks: `clip(ẋ, [0, v_target])`.
pub fn reward_visual(state: &PuppetState, v_target: f64) -> f64 {
    state.torso_vel()[0].clamp(0.0, v_target)
}

/// Speed-plus-posture reward of the proprioceptive tasks:
/// `min(|ẋ|, v_target) + α · head height`.
pub fn reward_proprio(state: &PuppetState, v_target: f64, head_coef: f64) -> f64 {
    state.torso_vel()[0].abs().min(v_target) + head_coef * state.head_height()
}

/// Gaussian tracking kernel `exp(-‖offsets - targets‖² / 2σ²)`.
pub fn tracking_reward(offsets: &[[f64; 2]; NUM_EFFECTORS], targets: &[[f64; 2]; NUM_EFFECTORS], sigma: f64) -> f64 {
    let sq: f64 = offsets
        .iter()
        .zip(targets)
        .map(|(o, t)| (o[0] - t[0]).powi(2) + (o[1] - t[1]).powi(2))
        .sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Mean Euclidean distance between effector offsets and targets.
pub fn tracking_distance(offsets: &[[f64; 2]; NUM_EFFECTORS], targets: &[[f64; 2]; NUM_EFFECTORS]) -> f64 {
    offsets
        .iter()
        .zip(targets)
        .map(|(o, t)| ((o[0] - t[0]).powi(2) + (o[1] - t[1]).powi(2)).sqrt())
        .sum::<f64>()
        / NUM_EFFECTORS as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    /// Environment termination δ.
    pub terminated: bool,
    /// Time limit reached without termination.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub length: usize,
    pub terminated_early: bool,
    pub mean_torso_height: f64,
}

/// One task episode on generated terrain.
#[derive(Clone, Debug)]
pub struct PuppetEnv {
    env: EnvConfig,
    task: TaskConfig,
    terrain: Terrain,
    state: PuppetState,
    t: usize,
    closed: bool,
    rest_height: f64,
}

impl PuppetEnv {
    pub fn reset(task: &TaskConfig, env: &EnvConfig, seed: u64) -> Result<Self> {
        task.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terrain = Terrain::generate(task, &mut rng);
        Ok(Self::with_terrain(task, env, terrain, PuppetState::standing(0.0, 0.0, env.gravity)))
    }

    pub fn with_terrain(task: &TaskConfig, env: &EnvConfig, terrain: Terrain, state: PuppetState) -> Self {
        Self {
            env: env.clone(),
            task: task.clone(),
            terrain,
            state,
            t: 0,
            closed: false,
            rest_height: physics::rest_torso_height(env.gravity),
        }
    }

    pub fn state(&self) -> &PuppetState {
        &self.state
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn task(&self) -> &TaskConfig {
        &self.task
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn feature(&self) -> TerrainFeature {
        self.terrain.feature(self.state.torso()[0])
    }

    pub fn observation(&self) -> Observation {
        Observation {
            q: proprio(&self.state, &self.terrain),
            terrain: Some(self.feature().0.to_vec()),
            command: None,
        }
    }

    pub fn torso_clearance(&self) -> f64 {
        let t = self.state.torso();
        t[1] - self.terrain.support_height(t[0])
    }

    /// Torso sagging below half its rest height, or head/torso touching terrain.
    pub fn is_terminal(&self) -> bool {
        self.torso_clearance() < 0.5 * self.rest_height
            || self.state.contact[physics::TORSO]
            || self.state.contact[physics::HEAD]
    }

    pub fn reward(&self) -> f64 {
        if self.task.name.is_visual() {
            reward_visual(&self.state, self.env.v_target)
        } else {
            reward_proprio(&self.state, self.env.v_target, self.env.head_height_coef)
        }
    }

    /// Applies a normalized action in `[-1, 1]^6`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.closed {
            return Err(Error::EpisodeClosed);
        }
        if action.len() != ACTION_DIM {
            return Err(Error::contract(format!("action has {} dims, expected {ACTION_DIM}", action.len())));
        }
        self.physics_step(action)?;
        let terminated = self.is_terminal();
        let truncated = !terminated && self.t >= self.task.episode_limit;
        self.closed = terminated || truncated;
        Ok(StepOutcome {
            reward: self.reward(),
            terminated,
            truncated,
        })
    }

    fn physics_step(&mut self, action: &[f64]) -> Result<()> {
        let command = physics::action_to_offsets(action);
        physics::integrate(&mut self.state, command, &self.terrain, &self.env);
        self.t += 1;
        if !self.state.is_finite() {
            return Err(Error::NonFinite(format!("puppet state at step {}", self.t)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TaskKind;

    fn env_cfg() -> EnvConfig {
        EnvConfig::default()
    }

    #[test]
    fn reset_is_deterministic() {
        let task = TaskConfig::for_task(TaskKind::Hurdles);
        let a = PuppetEnv::reset(&task, &env_cfg(), 11).unwrap();
        let b = PuppetEnv::reset(&task, &env_cfg(), 11).unwrap();
        assert_eq!(a.terrain(), b.terrain());
        assert_eq!(a.state(), b.state());
        let c = PuppetEnv::reset(&task, &env_cfg(), 12).unwrap();
        assert_ne!(a.terrain(), c.terrain());
    }

    #[test]
    fn stand_terrain_is_flat() {
        let env = PuppetEnv::reset(&TaskConfig::for_task(TaskKind::Stand), &env_cfg(), 0).unwrap();
        let f = env.feature();
        assert!(f.0.iter().all(|&v| v == f.0[0]));
        assert_eq!(f.0.len(), FEATURE_LEN);
    }

    #[test]
    fn visual_reward_clips() {
        let mut s = PuppetState::standing(0.0, 0.0, 9.81);
        for (vx, r) in [(-1.0, 0.0), (3.0, 3.0), (8.0, 6.0)] {
            s.vel[physics::TORSO][0] = vx;
            assert_eq!(reward_visual(&s, 6.0), r);
        }
    }

    #[test]
    fn proprio_reward_terms() {
        let mut s = PuppetState::standing(0.0, 0.0, 9.81);
        let h0 = s.head_height();
        assert_eq!(reward_proprio(&s, 6.0, 1.0), h0);
        s.vel[physics::TORSO][0] = -10.0;
        assert_eq!(reward_proprio(&s, 6.0, 1.0), 6.0 + h0);
        let upright = reward_proprio(&s, 6.0, 1.0);
        s.pos[physics::HEAD][1] = s.pos[physics::TORSO][1] - 0.1;
        assert!(reward_proprio(&s, 6.0, 1.0) < upright);
    }

    #[test]
    fn tracking_kernel_values() {
        let t = physics::REST_OFFSETS;
        assert_eq!(tracking_reward(&t, &t, 0.3), 1.0);
        let mut o = t;
        o[0][0] += 0.3;
        assert!((tracking_reward(&o, &t, 0.3) - (-0.5f64).exp()).abs() < 1e-15);
        o[1][1] += 1e3;
        assert_eq!(tracking_reward(&o, &t, 0.3), 0.0);
    }

    #[test]
    fn closed_episode_rejects_steps() {
        let mut task = TaskConfig::for_task(TaskKind::Stand);
        task.episode_limit = 3;
        let mut env = PuppetEnv::reset(&task, &env_cfg(), 0).unwrap();
        for _ in 0..2 {
            assert!(!env.step(&[0.0; 6]).unwrap().truncated);
        }
        assert!(env.step(&[0.0; 6]).unwrap().truncated);
        assert!(matches!(env.step(&[0.0; 6]), Err(Error::EpisodeClosed)));
    }
}
