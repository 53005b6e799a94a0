use std::path::{Path, PathBuf};

use puppeteer_core::agents::{
    self, gap_sweep, scripted_baseline, ActionSelector, EvalAggregate, EvalMode, EvalStepRecord, ModelTracker, TrainPaths,
    COMMAND_DIM, COMMAND_HORIZON, PUPPETEER_OBS_DIM, TRACKER_OBS_DIM,
};
use puppeteer_core::config::{ActionSelection, RunConfig};
use puppeteer_core::data::{generate_clips, generate_offline_rollouts, OfflineDataset, ReferenceClip};
use puppeteer_core::env::{EpisodeResult, ACTION_DIM};
use puppeteer_core::metrics::io::{read_jsonl, write_csv, JsonlWriter};
use puppeteer_core::metrics::{
    naturalness_proxies, rollout_clips, MethodResults, RandomTracker, ScriptedTracker, TrackingMetrics, TrackingPolicy,
};
use puppeteer_core::world_model::{Role, WorldModel};
use puppeteer_core::{Error, Result};
use serde::Serialize;

use crate::{Common, EvalArgs, EvalWhich, MetricsArgs, TrackingPolicyKind};

pub fn load_config(common: &Common) -> Result<RunConfig> {
    let base = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    RunConfig::with_overrides(base, &overrides)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.paths.out_dir)
}

fn save_resolved(cfg: &RunConfig, name: &str) -> Result<()> {
    cfg.save(&out_dir(cfg).join(format!("{name}_config.json")))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn load_model(path: &str, role: Role, obs_dim: usize, action_dim: usize) -> Result<WorldModel> {
    let (m, _) = WorldModel::load(Path::new(path))?;
    m.check_interface(role, obs_dim, action_dim)?;
    Ok(m)
}

fn load_tracker(cfg: &RunConfig) -> Result<WorldModel> {
    load_model(&cfg.paths.tracker_checkpoint, Role::Tracker, TRACKER_OBS_DIM, ACTION_DIM)
}

pub fn gen_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let d = &cfg.data;
    let clips = generate_clips(d.num_clips, d.clip_min_frames, d.clip_max_frames, cfg.env.dt, cfg.seed)?;
    let data = generate_offline_rollouts(&clips, &cfg.env, COMMAND_HORIZON, d.rollouts_per_clip, d.noise_scale, cfg.seed)?;
    data.write(Path::new(&cfg.paths.dataset))?;
    save_resolved(&cfg, "gen_data")?;
    print_json(&serde_json::json!({
        "dataset": cfg.paths.dataset,
        "clips": data.clips.len(),
        "episodes": data.episodes.len(),
        "transitions": data.episodes.iter().map(|e| e.len()).sum::<usize>(),
    }))
}

fn clip_set(cfg: &RunConfig) -> Result<Vec<ReferenceClip>> {
    let path = Path::new(&cfg.paths.dataset);
    let mut clips = if path.exists() {
        OfflineDataset::read(path)?.clips
    } else {
        let d = &cfg.data;
        generate_clips(d.num_clips, d.clip_min_frames, d.clip_max_frames, cfg.env.dt, cfg.seed)?
    };
    if cfg.eval.clips > 0 {
        clips.truncate(cfg.eval.clips);
    }
    Ok(clips)
}

pub fn train_tracker(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    save_resolved(&cfg, "train_tracker")?;
    let dataset = if cfg.data.offline_ratio > 0.0 {
        Some(OfflineDataset::read(Path::new(&cfg.paths.dataset))?)
    } else {
        None
    };
    let paths = TrainPaths {
        log: out_dir(&cfg).join("tracker_train.jsonl"),
        checkpoint: PathBuf::from(&cfg.paths.tracker_checkpoint),
    };
    let out = agents::train_tracker(&cfg, dataset.as_ref(), &paths)?;
    let clips = clip_set(&cfg)?;
    let mut policy = ModelTracker {
        model: &out.model,
        selector: ActionSelector::new(&cfg.planner, cfg.eval.action_selection, cfg.seed),
    };
    let rollouts = rollout_clips(&mut policy, &clips, &cfg.env, COMMAND_HORIZON)?;
    let metrics = TrackingMetrics::from_rollouts(&rollouts)?;
    std::fs::write(out_dir(&cfg).join("tracker_metrics.json"), serde_json::to_string_pretty(&metrics)?)
        .map_err(|e| Error::io(out_dir(&cfg), e))?;
    print_json(&serde_json::json!({ "steps": out.steps, "episodes": out.episodes, "metrics": metrics }))
}

pub fn train_puppeteer(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    save_resolved(&cfg, "train_puppeteer")?;
    let tracker = load_tracker(&cfg)?;
    let paths = TrainPaths {
        log: out_dir(&cfg).join("puppeteer_train.jsonl"),
        checkpoint: PathBuf::from(&cfg.paths.puppeteer_checkpoint),
    };
    let out = agents::train_puppeteer(&cfg, &tracker, &paths)?;
    print_json(&serde_json::json!({ "steps": out.steps, "episodes": out.episodes }))
}

pub fn finetune(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let source = cfg
        .paths
        .source_checkpoint
        .clone()
        .ok_or_else(|| Error::config("finetune requires paths.source_checkpoint"))?;
    save_resolved(&cfg, "finetune")?;
    let tracker = load_tracker(&cfg)?;
    let paths = TrainPaths {
        log: out_dir(&cfg).join("finetune_train.jsonl"),
        checkpoint: PathBuf::from(&cfg.paths.puppeteer_checkpoint),
    };
    let out = agents::finetune_puppeteer(&cfg, &tracker, Path::new(&source), &paths)?;
    print_json(&serde_json::json!({ "steps": out.steps, "episodes": out.episodes }))
}

pub fn eval(common: &Common, args: &EvalArgs) -> Result<()> {
    let cfg = load_config(common)?;
    save_resolved(&cfg, "eval")?;
    let dir = out_dir(&cfg);
    let modes: Vec<EvalMode> = match args.mode {
        EvalWhich::Plan => vec![EvalMode::Hierarchical(ActionSelection::Plan)],
        EvalWhich::Policy => vec![EvalMode::Hierarchical(ActionSelection::Policy)],
        EvalWhich::Scripted => vec![EvalMode::Scripted],
        EvalWhich::All => vec![
            EvalMode::Hierarchical(ActionSelection::Plan),
            EvalMode::Hierarchical(ActionSelection::Policy),
            EvalMode::Scripted,
        ],
    };
    let needs_models = args.sweep || modes.iter().any(|m| *m != EvalMode::Scripted);
    let models = if needs_models {
        Some((
            load_tracker(&cfg)?,
            load_model(&cfg.paths.puppeteer_checkpoint, Role::Puppeteer, PUPPETEER_OBS_DIM, COMMAND_DIM)?,
        ))
    } else {
        None
    };
    let mut dump = JsonlWriter::create(&dir.join("eval.jsonl"))?;
    let mut rows = Vec::new();
    for mode in modes {
        let res = match (mode, &models) {
            (EvalMode::Scripted, _) => scripted_baseline(&cfg, cfg.eval.episodes, Some(&mut dump))?,
            (EvalMode::Hierarchical(sel), Some((t, p))) => agents::evaluate(&cfg, t, p, sel, cfg.eval.episodes, Some(&mut dump))?,
            (EvalMode::Hierarchical(_), None) => unreachable!("models are loaded for hierarchical modes"),
        };
        let agg = EvalAggregate::from_results(mode.label(), &cfg, &res);
        print_json(&agg)?;
        rows.push(agg);
    }
    dump.flush()?;
    write_csv(&dir.join("eval.csv"), &rows)?;
    if args.sweep {
        let (t, p) = models.as_ref().expect("loaded for the sweep");
        let sel = match args.mode {
            EvalWhich::Policy => ActionSelection::Policy,
            _ => ActionSelection::Plan,
        };
        let sweep = gap_sweep(&cfg, t, p, sel, &cfg.eval.gap_sweep, cfg.eval.episodes)?;
        for r in &sweep {
            print_json(r)?;
        }
        write_csv(&dir.join("gap_sweep.csv"), &sweep)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrackingRow {
    policy: String,
    clips: usize,
    success_rate: f64,
    tracking_error: f64,
    comic_score: f64,
}

fn parse_input(arg: &str) -> Result<(String, PathBuf, PathBuf)> {
    let parts: Vec<&str> = arg.splitn(3, ':').collect();
    match parts.as_slice() {
        [m, a, b] if !m.is_empty() => Ok((m.to_string(), PathBuf::from(a), PathBuf::from(b))),
        _ => Err(Error::config(format!("--input {arg:?} is not METHOD:CKPT_EVAL:FINAL_EVAL"))),
    }
}

fn episodes_in(path: &Path) -> Result<Vec<EpisodeResult>> {
    Ok(read_jsonl::<EvalStepRecord>(path)?
        .into_iter()
        .filter_map(|r| match r {
            EvalStepRecord::Episode { result, .. } => Some(result),
            EvalStepRecord::Step { .. } => None,
        })
        .collect())
}

pub fn metrics(common: &Common, args: &MetricsArgs) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(&cfg);
    match args {
        MetricsArgs::Tracking { policy } => {
            let clips = clip_set(&cfg)?;
            let tracker;
            let mut p: Box<dyn TrackingPolicy> = match policy {
                TrackingPolicyKind::Model => {
                    tracker = load_tracker(&cfg)?;
                    Box::new(ModelTracker {
                        model: &tracker,
                        selector: ActionSelector::new(&cfg.planner, cfg.eval.action_selection, cfg.seed),
                    })
                }
                TrackingPolicyKind::Scripted => Box::new(ScriptedTracker::new(0.0, cfg.seed)),
                TrackingPolicyKind::Random => Box::new(RandomTracker::new(cfg.seed)),
            };
            let rollouts = rollout_clips(p.as_mut(), &clips, &cfg.env, COMMAND_HORIZON)?;
            let mut w = JsonlWriter::create(&dir.join("tracking_rollouts.jsonl"))?;
            for r in &rollouts {
                w.write(r)?;
            }
            w.flush()?;
            let m = TrackingMetrics::from_rollouts(&rollouts)?;
            let row = TrackingRow {
                policy: format!("{policy:?}").to_lowercase(),
                clips: clips.len(),
                success_rate: m.success_rate,
                tracking_error: m.tracking_error,
                comic_score: m.comic_score,
            };
            write_csv(&dir.join("tracking_metrics.csv"), std::slice::from_ref(&row))?;
            print_json(&row)
        }
        MetricsArgs::Naturalness { inputs } => {
            let mut methods: Vec<MethodResults> = Vec::new();
            for input in inputs {
                let (method, ckpt, fin) = parse_input(input)?;
                let idx = match methods.iter().position(|m| m.method == method) {
                    Some(i) => i,
                    None => {
                        methods.push(MethodResults {
                            method,
                            ..Default::default()
                        });
                        methods.len() - 1
                    }
                };
                methods[idx].at_checkpoint.push(episodes_in(&ckpt)?);
                methods[idx].at_end.push(episodes_in(&fin)?);
            }
            let rows: Vec<_> = methods.iter().map(naturalness_proxies).collect();
            write_csv(&dir.join("naturalness.csv"), &rows)?;
            for r in &rows {
                print_json(r)?;
            }
            Ok(())
        }
    }
}
