use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ActionSelector, Decision, Hierarchy, ScriptedRunner, COMMAND_DIM, PUPPETEER_OBS_DIM};
use crate::config::{ActionSelection, RunConfig, TaskKind};
use crate::env::{EpisodeResult, PuppetEnv};
use crate::error::{Error, Result};
use crate::metrics::io::JsonlWriter;
use crate::metrics::mean_std;
use crate::world_model::{Role, WorldModel};

/// Terrain seed of evaluation episode `i`. Shared across methods so that
/// comparisons are paired.
pub fn eval_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(1_000_000 + episode as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Puppeteer commands through the frozen tracker.
    Hierarchical(ActionSelection),
    /// Terrain-blind scripted running gait.
    Scripted,
}

impl EvalMode {
    pub fn label(self) -> &'static str {
        match self {
            EvalMode::Hierarchical(ActionSelection::Plan) => "hierarchical_plan",
            EvalMode::Hierarchical(ActionSelection::Policy) => "hierarchical_policy_prior",
            EvalMode::Scripted => "scripted_baseline",
        }
    }
}

/// JSONL dump line: one per decision, plus one summary per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalStepRecord {
    Step {
        method: String,
        episode: usize,
        t: usize,
        reward: f64,
        torso_x: f64,
        torso_height: f64,
    },
    Episode {
        method: String,
        episode: usize,
        seed: u64,
        #[serde(flatten)]
        result: EpisodeResult,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub method: String,
    pub task: String,
    pub gap_length: Option<f64>,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_length: f64,
    pub mean_torso_height: f64,
    pub terminated_fraction: f64,
}

impl EvalAggregate {
    pub fn from_results(method: &str, cfg: &RunConfig, results: &[EpisodeResult]) -> Self {
        let (mean_return, std_return) = mean_std(&results.iter().map(|r| r.episode_return).collect::<Vec<_>>());
        let n = results.len().max(1) as f64;
        Self {
            method: method.into(),
            task: cfg.task.name.name().into(),
            gap_length: cfg.task.gap_length,
            episodes: results.len(),
            mean_return,
            std_return,
            mean_length: results.iter().map(|r| r.length as f64).sum::<f64>() / n,
            mean_torso_height: results.iter().map(|r| r.mean_torso_height).sum::<f64>() / n,
            terminated_fraction: results.iter().filter(|r| r.terminated_early).count() as f64 / n,
        }
    }
}

fn run_episodes(
    cfg: &RunConfig,
    episodes: usize,
    label: &str,
    mut dump: Option<&mut JsonlWriter>,
    mut decide: impl FnMut(&mut PuppetEnv, usize, bool) -> Result<Decision>,
) -> Result<Vec<EpisodeResult>> {
    let mut out = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let seed = eval_seed(cfg.seed, ep);
        let mut env = PuppetEnv::reset(&cfg.task, &cfg.env, seed)?;
        let (mut ret, mut height, mut len, mut t) = (0.0, 0.0, 0, 0);
        let terminated = loop {
            let d = decide(&mut env, ep, t == 0)?;
            ret += d.reward;
            len += d.low_steps;
            // With k > 1 the decision's end state stands in for its steps.
            height += env.torso_clearance() * d.low_steps as f64;
            if let Some(w) = dump.as_deref_mut() {
                w.write(&EvalStepRecord::Step {
                    method: label.into(),
                    episode: ep,
                    t,
                    reward: d.reward,
                    torso_x: env.state().torso()[0],
                    torso_height: env.torso_clearance(),
                })?;
            }
            t += 1;
            if d.done() {
                break d.terminated;
            }
        };
        let result = EpisodeResult {
            episode_return: ret,
            length: len,
            terminated_early: terminated,
            mean_torso_height: height / len.max(1) as f64,
        };
        if let Some(w) = dump.as_deref_mut() {
            w.write(&EvalStepRecord::Episode {
                method: label.into(),
                episode: ep,
                seed,
                result: result.clone(),
            })?;
        }
        out.push(result);
    }
    Ok(out)
}

/// Deterministic evaluation with mean actions at both levels; terrain seeds
/// come from [`eval_seed`].
pub fn evaluate(
    cfg: &RunConfig,
    tracker: &WorldModel,
    puppeteer: &WorldModel,
    selection: ActionSelection,
    episodes: usize,
    dump: Option<&mut JsonlWriter>,
) -> Result<Vec<EpisodeResult>> {
    cfg.validate()?;
    puppeteer.check_interface(Role::Puppeteer, PUPPETEER_OBS_DIM, COMMAND_DIM)?;
    let label = EvalMode::Hierarchical(selection).label();
    let mut state: Option<(Hierarchy, ActionSelector)> = None;
    run_episodes(cfg, episodes, label, dump, |env, ep, first| {
        if first {
            // Fresh selectors per episode so each episode is reproducible alone.
            let mut seeds = ChaCha8Rng::seed_from_u64(eval_seed(cfg.seed, ep));
            let h = Hierarchy::new(tracker, &cfg.planner, cfg.tracker.action_selection, cfg.hierarchy.k, seeds.random())?;
            state = Some((h, ActionSelector::new(&cfg.planner, selection, seeds.random())));
        }
        let (hierarchy, selector) = state.as_mut().expect("initialized on the first decision");
        let obs = env.observation().flatten();
        let command = selector.act(puppeteer, &obs, false)?;
        hierarchy.execute(env, &command)
    })
}

/// Terrain-blind scripted running baseline on the configured task.
pub fn scripted_baseline(cfg: &RunConfig, episodes: usize, dump: Option<&mut JsonlWriter>) -> Result<Vec<EpisodeResult>> {
    cfg.validate()?;
    let mut runner = ScriptedRunner::new();
    run_episodes(cfg, episodes, EvalMode::Scripted.label(), dump, |env, _, first| {
        if first {
            runner.reset();
        }
        let a = runner.act(env);
        let out = env.step(&a)?;
        Ok(Decision {
            reward: out.reward,
            terminated: out.terminated,
            truncated: out.truncated,
            low_steps: 1,
            step_rewards: vec![out.reward],
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSweepRow {
    pub method: String,
    pub gap_length: f64,
    pub episodes: usize,
    pub mean_return: f64,
    /// Mean return over the largest attainable return `v_target · episode_limit`.
    pub normalized_score: f64,
}

/// Evaluates with every gap fixed to each length in `lengths`.
pub fn gap_sweep(
    cfg: &RunConfig,
    tracker: &WorldModel,
    puppeteer: &WorldModel,
    selection: ActionSelection,
    lengths: &[f64],
    episodes: usize,
) -> Result<Vec<GapSweepRow>> {
    if cfg.task.name != TaskKind::Gaps {
        return Err(Error::config("gap sweep requires task.name = gaps"));
    }
    let best = cfg.env.v_target * cfg.task.episode_limit as f64;
    lengths
        .iter()
        .map(|&g| {
            let mut c = cfg.clone();
            c.task.gap_length = Some(g);
            let res = evaluate(&c, tracker, puppeteer, selection, episodes, None)?;
            let agg = EvalAggregate::from_results(EvalMode::Hierarchical(selection).label(), &c, &res);
            Ok(GapSweepRow {
                method: agg.method,
                gap_length: g,
                episodes,
                mean_return: agg.mean_return,
                normalized_score: agg.mean_return / best,
            })
        })
        .collect()
}
