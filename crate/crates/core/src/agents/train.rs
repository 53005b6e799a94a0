use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agents::{random_action, ActionSelector, Hierarchy, COMMAND_DIM, COMMAND_HORIZON, PUPPETEER_OBS_DIM, TRACKER_OBS_DIM};
use crate::config::RunConfig;
use crate::data::{sample_mixed_batch, OfflineDataset, OfflineSampler, ReplayBuffer};
use crate::env::{PuppetEnv, TrackingEnv, ACTION_DIM};
use crate::error::{Error, Result};
use crate::metrics::io::JsonlWriter;
use crate::world_model::{Learner, Role, UpdateStats, WorldModel};

/// Where a training run writes its log and final checkpoint. Periodic
/// checkpoints go next to the final one as `<stem>_step<N>.json`.
#[derive(Clone, Debug)]
pub struct TrainPaths {
    pub log: PathBuf,
    pub checkpoint: PathBuf,
}

impl TrainPaths {
    pub fn periodic(&self, step: usize) -> PathBuf {
        let stem = self.checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
        self.checkpoint.with_file_name(format!("{stem}_step{step}.json"))
    }
}

/// One line of a training log, written at the end of every episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub phase: String,
    /// Environment steps (high-level steps for the puppeteer) so far.
    pub step: usize,
    pub episode: usize,
    pub episode_return: f64,
    pub eplen: usize,
    pub terminated: bool,
    pub updates: usize,
    /// Mean update statistics over this episode's updates.
    pub losses: Option<UpdateStats>,
    pub clip: Option<usize>,
    /// Mean effector distance to the reference over the episode.
    pub tracking_error: Option<f64>,
}

pub struct TrainOutcome {
    pub model: WorldModel,
    pub q_scale: f64,
    pub steps: usize,
    pub episodes: usize,
}

#[derive(Default)]
struct StatsMean {
    sum: [f64; 8],
    n: usize,
}

impl StatsMean {
    fn add(&mut self, s: &UpdateStats) {
        let v = [s.consistency, s.reward, s.value, s.termination, s.model_loss, s.policy_loss, s.q_scale, s.grad_norm];
        for (a, b) in self.sum.iter_mut().zip(v) {
            *a += b;
        }
        self.n += 1;
    }

    fn take(&mut self) -> (usize, Option<UpdateStats>) {
        let n = std::mem::take(&mut self.n);
        let s = std::mem::take(&mut self.sum).map(|v| v / n as f64);
        let stats = (n > 0).then(|| UpdateStats {
            consistency: s[0],
            reward: s[1],
            value: s[2],
            termination: s[3],
            model_loss: s[4],
            policy_loss: s[5],
            q_scale: s[6],
            grad_norm: s[7],
        });
        (n, stats)
    }
}

fn checkpoint_extra(phase: &str, steps: usize, learner: &Learner) -> serde_json::Value {
    json!({ "phase": phase, "steps": steps, "q_scale": learner.scale().value })
}

fn save(learner: &Learner, path: &Path, phase: &str, steps: usize) -> Result<()> {
    learner.model().save(path, checkpoint_extra(phase, steps, learner))?;
    log::info!("saved {} at step {steps}", path.display());
    Ok(())
}

/// Trains the tracker on mixed offline/online batches, one gradient update
/// per environment step after the seed phase.
pub fn train_tracker(cfg: &RunConfig, data: Option<&OfflineDataset>, paths: &TrainPaths) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tc = &cfg.tracker;
    let h = cfg.planner.horizon;
    let ratio = cfg.data.offline_ratio;
    let offline = match data {
        Some(d) if ratio > 0.0 => {
            if d.obs_dim() != TRACKER_OBS_DIM || d.action_dim() != ACTION_DIM || d.horizon != COMMAND_HORIZON {
                return Err(Error::Incompatible(format!(
                    "dataset has obs {} / action {} / command horizon {}, tracker needs {TRACKER_OBS_DIM} / {ACTION_DIM} / {COMMAND_HORIZON}",
                    d.obs_dim(),
                    d.action_dim(),
                    d.horizon
                )));
            }
            Some(d.subset(cfg.data.data_fraction)?)
        }
        Some(_) => None,
        None if ratio > 0.0 => return Err(Error::config("data.offline_ratio > 0 requires an offline dataset")),
        None => None,
    };
    let sampler = offline.as_ref().map(|d| OfflineSampler::new(d, h)).transpose()?;
    let clips = match (&offline, data) {
        (Some(d), _) => d.clips.clone(),
        (None, Some(d)) => d.subset(cfg.data.data_fraction)?.clips,
        (None, None) => crate::data::generate_clips(
            cfg.data.num_clips,
            cfg.data.clip_min_frames,
            cfg.data.clip_max_frames,
            cfg.env.dt,
            cfg.seed,
        )?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = WorldModel::new(Role::Tracker, &cfg.model, TRACKER_OBS_DIM, ACTION_DIM, cfg.seed)?;
    let mut learner = Learner::new(model, &cfg.optim, rng.random())?;
    let mut selector = ActionSelector::new(&cfg.planner, tc.action_selection, rng.random());
    let mut buffer = ReplayBuffer::new(cfg.data.buffer_capacity.min(tc.steps.max(1)), TRACKER_OBS_DIM, ACTION_DIM)?;
    let mut log = JsonlWriter::create(&paths.log)?;
    let mut stats = StatsMean::default();
    let (mut step, mut episode) = (0, 0);

    while step < tc.steps {
        let clip = &clips[rng.random_range(0..clips.len())];
        let mut env = TrackingEnv::new(clip.clone(), &cfg.env, COMMAND_HORIZON);
        selector.reset();
        let (mut ret, mut dist, mut len, mut terminated) = (0.0, 0.0, 0, false);
        let mut obs = env.observation().flatten();
        while !env.is_closed() && step < tc.steps {
            let action = if step < tc.seed_steps {
                random_action(ACTION_DIM, &mut rng)
            } else {
                selector.act(learner.model(), &obs, true)?
            };
            let out = env.step(&action)?;
            let next = env.observation().flatten();
            buffer.push(&obs, &action, out.reward, &next, out.terminated)?;
            obs = next;
            ret += out.reward;
            dist += out.distance;
            len += 1;
            terminated = out.terminated;
            step += 1;
            if step >= tc.seed_steps && (offline.is_some() || buffer.has_window(h)) {
                for _ in 0..cfg.optim.update_to_data {
                    let off = offline.as_ref().zip(sampler.as_ref());
                    let batch = sample_mixed_batch(off, &buffer, cfg.optim.batch_size, ratio, h, &mut rng)?;
                    stats.add(&learner.update(&batch)?);
                }
            }
            if tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0 && step < tc.steps {
                save(&learner, &paths.periodic(step), "train", step)?;
            }
        }
        buffer.end_episode();
        let (updates, losses) = stats.take();
        log.write(&TrainRecord {
            phase: "train".into(),
            step,
            episode,
            episode_return: ret,
            eplen: len,
            terminated,
            updates,
            losses,
            clip: Some(clip.id),
            tracking_error: Some(dist / len.max(1) as f64),
        })?;
        log::debug!("tracker step {step} episode {episode} return {ret:.3} eplen {len}");
        if tc.log_every > 0 && step / tc.log_every != (step - len) / tc.log_every {
            log::info!("tracker step {step} episode {episode} return {ret:.3} eplen {len}");
        }
        episode += 1;
    }
    log.flush()?;
    save(&learner, &paths.checkpoint, "train", step)?;
    Ok(TrainOutcome {
        q_scale: learner.scale().value,
        model: learner.into_model(),
        steps: step,
        episodes: episode,
    })
}

/// Trains the puppeteer from scratch on the configured task.
pub fn train_puppeteer(cfg: &RunConfig, tracker: &WorldModel, paths: &TrainPaths) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = WorldModel::new(Role::Puppeteer, &cfg.model, PUPPETEER_OBS_DIM, COMMAND_DIM, cfg.seed)?;
    let learner = Learner::new(model, &cfg.optim, rng.random())?;
    let mut log = JsonlWriter::create(&paths.log)?;
    run_puppeteer(cfg, tracker, learner, rng, "train", &mut log, paths)
}

/// Continues training a puppeteer checkpoint on the configured task.
pub fn finetune_puppeteer(cfg: &RunConfig, tracker: &WorldModel, source: &Path, paths: &TrainPaths) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (model, extra) = WorldModel::load(source)?;
    model.check_interface(Role::Puppeteer, PUPPETEER_OBS_DIM, COMMAND_DIM)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut learner = Learner::new(model, &cfg.optim, rng.random())?;
    if let Some(s) = extra.get("q_scale").and_then(|v| v.as_f64()) {
        learner.set_scale(s);
    }
    let mut log = JsonlWriter::create(&paths.log)?;
    log.write(&json!({
        "phase": "source",
        "checkpoint": source.display().to_string(),
        "step": extra.get("steps").cloned().unwrap_or(serde_json::Value::Null),
        "source_phase": extra.get("phase").cloned().unwrap_or(serde_json::Value::Null),
    }))?;
    run_puppeteer(cfg, tracker, learner, rng, "finetune", &mut log, paths)
}

fn run_puppeteer(
    cfg: &RunConfig,
    tracker: &WorldModel,
    mut learner: Learner,
    mut rng: ChaCha8Rng,
    phase: &str,
    log: &mut JsonlWriter,
    paths: &TrainPaths,
) -> Result<TrainOutcome> {
    if !cfg.hierarchy.freeze_tracker {
        return Err(Error::config("hierarchy.freeze_tracker = false is not supported; the tracker is always frozen"));
    }
    let pc = &cfg.puppeteer;
    let h = cfg.planner.horizon;
    let mut hierarchy = Hierarchy::new(tracker, &cfg.planner, cfg.tracker.action_selection, cfg.hierarchy.k, rng.random())?;
    let mut selector = ActionSelector::new(&cfg.planner, pc.action_selection, rng.random());
    let mut buffer = ReplayBuffer::new(cfg.data.buffer_capacity.min(pc.steps.max(1)), PUPPETEER_OBS_DIM, COMMAND_DIM)?;
    let mut stats = StatsMean::default();
    let (mut step, mut episode) = (0, 0);

    while step < pc.steps {
        let mut env = PuppetEnv::reset(&cfg.task, &cfg.env, rng.random())?;
        hierarchy.reset();
        selector.reset();
        let (mut ret, mut len, mut terminated) = (0.0, 0, false);
        let mut obs = env.observation().flatten();
        while !env.is_closed() && step < pc.steps {
            let command = if step < pc.seed_steps {
                random_action(COMMAND_DIM, &mut rng)
            } else {
                selector.act(learner.model(), &obs, true)?
            };
            let d = hierarchy.execute(&mut env, &command)?;
            let next = env.observation().flatten();
            buffer.push(&obs, &command, d.reward, &next, d.terminated)?;
            obs = next;
            ret += d.reward;
            len += 1;
            terminated = d.terminated;
            step += 1;
            if step >= pc.seed_steps && buffer.has_window(h) {
                for _ in 0..cfg.optim.update_to_data {
                    let batch = sample_mixed_batch(None, &buffer, cfg.optim.batch_size, 0.0, h, &mut rng)?;
                    stats.add(&learner.update(&batch)?);
                }
            }
            if pc.checkpoint_every > 0 && step % pc.checkpoint_every == 0 && step < pc.steps {
                save(&learner, &paths.periodic(step), phase, step)?;
            }
        }
        buffer.end_episode();
        let (updates, losses) = stats.take();
        log.write(&TrainRecord {
            phase: phase.into(),
            step,
            episode,
            episode_return: ret,
            eplen: len,
            terminated,
            updates,
            losses,
            clip: None,
            tracking_error: None,
        })?;
        log::debug!("puppeteer {phase} step {step} episode {episode} return {ret:.3} eplen {len}");
        if pc.log_every > 0 && step / pc.log_every != (step - len) / pc.log_every {
            log::info!("puppeteer {phase} step {step} episode {episode} return {ret:.3} eplen {len}");
        }
        episode += 1;
    }
    log.flush()?;
    save(&learner, &paths.checkpoint, phase, step)?;
    Ok(TrainOutcome {
        q_scale: learner.scale().value,
        model: learner.into_model(),
        steps: step,
        episodes: episode,
    })
}
