//! Tracking and puppeteer agents, the command hierarchy, training loops and
//! evaluation.

mod eval;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ActionSelection, PlannerConfig};
use crate::data::clips::{gait_frame, Gait, GaitParams};
use crate::env::{proprio, PuppetEnv, TrackingEnv, ACTION_DIM, NUM_EFFECTORS, PROPRIO_DIM};
use crate::error::{Error, Result};
use crate::metrics::TrackingPolicy;
use crate::numeric::DenseArray;
use crate::planner::{plan, ActionSequenceDistribution};
use crate::world_model::{Role, WorldModel};
pub use eval::{
    eval_seed, evaluate, gap_sweep, scripted_baseline, EvalAggregate, EvalMode, EvalStepRecord, GapSweepRow,
};
pub use train::{finetune_puppeteer, train_puppeteer, train_tracker, TrainOutcome, TrainPaths, TrainRecord};

/// Reference frames carried by a command.
pub const COMMAND_HORIZON: usize = 3;
pub const COMMAND_DIM: usize = 2 * NUM_EFFECTORS * COMMAND_HORIZON;
pub const TRACKER_OBS_DIM: usize = PROPRIO_DIM + COMMAND_DIM;
pub const PUPPETEER_OBS_DIM: usize = PROPRIO_DIM + crate::env::FEATURE_LEN;

/// Chooses actions for one model: MPPI planning or the policy prior, with
/// the previous plan carried across steps of an episode.
#[derive(Clone, Debug)]
pub struct ActionSelector {
    cfg: PlannerConfig,
    mode: ActionSelection,
    prev: Option<ActionSequenceDistribution>,
    rng: ChaCha8Rng,
}

impl ActionSelector {
    pub fn new(cfg: &PlannerConfig, mode: ActionSelection, seed: u64) -> Self {
        Self {
            cfg: cfg.clone(),
            mode,
            prev: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> ActionSelection {
        self.mode
    }

    /// Forget the carried plan (episode boundary).
    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// `explore` samples from the final planning distribution (or the policy
    /// prior); otherwise the mean is returned.
    pub fn act(&mut self, model: &WorldModel, obs: &[f64], explore: bool) -> Result<Vec<f64>> {
        let z = model.encode_batch(&DenseArray::row(obs.to_vec()))?;
        match self.mode {
            ActionSelection::Plan => {
                let out = plan(model, &z, self.prev.as_ref(), &self.cfg, explore, self.rng.random())?;
                self.prev = Some(out.solution);
                Ok(out.action)
            }
            ActionSelection::Policy => {
                let noise = explore.then(|| {
                    let d = (0..model.action_dim()).map(|_| self.rng.sample(rand_distr::StandardNormal)).collect();
                    DenseArray::row(d)
                });
                Ok(model.policy_action(&z, noise.as_ref())?.into_data())
            }
        }
    }
}

/// One tracker decision for proprioception `q` and command `c`.
pub fn track_step(tracker: &WorldModel, selector: &mut ActionSelector, q: &[f64], command: &[f64]) -> Result<Vec<f64>> {
    if q.len() != PROPRIO_DIM || command.len() != COMMAND_DIM {
        return Err(Error::contract(format!(
            "track_step expects q of {PROPRIO_DIM} and command of {COMMAND_DIM} values, got {} and {}",
            q.len(),
            command.len()
        )));
    }
    if command.iter().any(|c| !(-1.0..=1.0).contains(c)) {
        return Err(Error::contract("command entries must lie in [-1, 1]"));
    }
    let mut obs = q.to_vec();
    obs.extend_from_slice(command);
    selector.act(tracker, &obs, false)
}

/// Uniform random vector in `[-1, 1]^n`.
pub fn random_action(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Result of executing one high-level command.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Sum of the enclosed low-level rewards.
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub low_steps: usize,
    /// Low-level rewards in order.
    pub step_rewards: Vec<f64>,
}

impl Decision {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Frozen tracker executing puppeteer commands for `k` low-level steps each.
pub struct Hierarchy<'a> {
    tracker: &'a WorldModel,
    selector: ActionSelector,
    k: usize,
}

impl<'a> Hierarchy<'a> {
    pub fn new(tracker: &'a WorldModel, planner: &PlannerConfig, mode: ActionSelection, k: usize, seed: u64) -> Result<Self> {
        tracker.check_interface(Role::Tracker, TRACKER_OBS_DIM, ACTION_DIM)?;
        if k == 0 {
            return Err(Error::config("hierarchy.k must be >= 1"));
        }
        Ok(Self {
            tracker,
            selector: ActionSelector::new(planner, mode, seed),
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reset(&mut self) {
        self.selector.reset();
    }

    /// Runs the command for `k` low-level steps or until the episode closes.
    pub fn execute(&mut self, env: &mut PuppetEnv, command: &[f64]) -> Result<Decision> {
        let mut d = Decision {
            reward: 0.0,
            terminated: false,
            truncated: false,
            low_steps: 0,
            step_rewards: Vec::with_capacity(self.k),
        };
        for _ in 0..self.k {
            let q = proprio(env.state(), env.terrain());
            let a = track_step(self.tracker, &mut self.selector, &q, command)?;
            let out = env.step(&a)?;
            d.reward += out.reward;
            d.step_rewards.push(out.reward);
            d.low_steps += 1;
            d.terminated = out.terminated;
            d.truncated = out.truncated;
            if d.done() {
                break;
            }
        }
        Ok(d)
    }
}

/// A learned tracker acting through its planner (or policy prior).
pub struct ModelTracker<'a> {
    pub model: &'a WorldModel,
    pub selector: ActionSelector,
}

impl TrackingPolicy for ModelTracker<'_> {
    fn reset(&mut self) {
        self.selector.reset();
    }

    fn act(&mut self, env: &TrackingEnv) -> Result<Vec<f64>> {
        let obs = env.observation();
        track_step(self.model, &mut self.selector, &obs.q, obs.command.as_deref().unwrap_or_default())
    }
}

/// Terrain-blind baseline: PD-tracks a fixed running gait straight ahead.
pub struct ScriptedRunner {
    params: GaitParams,
    t: usize,
}

impl ScriptedRunner {
    pub fn new() -> Self {
        Self {
            params: GaitParams {
                gait: Gait::Run,
                period: 16,
                stride: 0.35,
                lift: 0.2,
                lean: 0.08,
            },
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.t = 0;
    }

    pub fn act(&mut self, env: &PuppetEnv) -> [f64; ACTION_DIM] {
        self.t += 1;
        crate::env::tracking::scripted_action(env.state(), &gait_frame(&self.params, self.t))
    }
}

impl Default for ScriptedRunner {
    fn default() -> Self {
        Self::new()
    }
}
