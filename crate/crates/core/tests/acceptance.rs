//! Acceptance suite: one line per criterion. Criteria 7 to 9 need the full
//! training budget and only run with `PUPPETEER_ACCEPTANCE_FULL=1`.

use std::path::Path;
use std::time::{Duration, Instant};

use puppeteer_core::agents::{
    evaluate, gap_sweep, scripted_baseline, train_puppeteer, train_tracker, ActionSelector, EvalAggregate, ModelTracker,
    TrainPaths, TRACKER_OBS_DIM, COMMAND_HORIZON,
};
use puppeteer_core::config::{ActionSelection, EnvConfig, ModelConfig, PlannerConfig, RunConfig, TaskConfig, TaskKind, TruncationMode};
use puppeteer_core::data::{generate_clips, generate_offline_rollouts, sample_mixed_batch, Batch, OfflineDataset, OfflineSampler, ReplayBuffer, Source};
use puppeteer_core::env::physics::{self, PuppetState};
use puppeteer_core::env::{PuppetEnv, Terrain, ACTION_DIM};
use puppeteer_core::metrics::io::JsonlWriter;
use puppeteer_core::metrics::{rollout_clips, success_rate};
use puppeteer_core::numeric::gradcheck::check_blocks;
use puppeteer_core::numeric::DenseArray;
use puppeteer_core::planner::stub::{QuadraticStub, TableStub};
use puppeteer_core::planner::{plan, score_rollout, score_rollouts, PlanningModel};
use puppeteer_core::world_model::{LossWeights, Role, WorldModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseArray {
    DenseArray::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn tiny_model(seed: u64) -> WorldModel {
    let cfg = ModelConfig {
        encoder_dim: 8,
        mlp_dim: 8,
        latent_dim: 4,
        ..ModelConfig::default()
    };
    let mut m = WorldModel::new(Role::Tracker, &cfg, TRACKER_OBS_DIM, ACTION_DIM, seed).unwrap();
    // Zero-initialized heads would make their gradients trivially exact.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for v in m.params_mut().get_mut(id).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let p = m.params().clone();
    m.target_params_mut().assign_from(&p).unwrap();
    m
}

fn random_batch(b: usize, h: usize, obs_dim: usize, a_dim: usize, rng: &mut ChaCha8Rng) -> Batch {
    let obs = (0..=h).map(|_| normal(b, obs_dim, rng)).collect();
    let actions = (0..h).map(|_| normal(b, a_dim, rng).map(|v| v.clamp(-1.0, 1.0))).collect();
    let rewards = (0..h).map(|_| (0..b).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let terminals = (0..h)
        .map(|t| (0..b).map(|i| if t + 1 == h && i % 2 == 0 { 1.0 } else { 0.0 }).collect())
        .collect();
    Batch {
        obs,
        actions,
        rewards,
        terminals,
        sources: vec![Source::Online; b],
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let m = tiny_model(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = random_batch(4, 3, TRACKER_OBS_DIM, ACTION_DIM, &mut rng);
    let noise: Vec<DenseArray> = (0..3).map(|_| normal(4, ACTION_DIM, &mut rng)).collect();
    let targets = m.model_targets(&batch, (0, 1), &noise, 0.97).unwrap();
    let w = LossWeights::default();
    let (_, grads) = m.model_loss(&batch, &targets, &w).unwrap();
    let report = check_blocks(m.params(), &grads, &m.model_ids(), 1e-5, |s| {
        m.model_loss_value(s, &batch, &targets, &w).unwrap()
    });
    let secs = start.elapsed().as_secs_f64();
    verdict(
        report.max_rel_error < 1e-5 && secs < 10.0,
        format!("max relative error {:.2e} over {} entries, {secs:.2} s", report.max_rel_error, report.checked),
    )
}

/// Plain discounted return with no termination handling.
fn reference_score(m: &WorldModel, z0: &DenseArray, actions: &[DenseArray], discount: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z = z0.clone();
    let mut g = vec![0.0; z0.rows()];
    let mut disc = 1.0;
    for a in actions {
        let (next, r, _) = m.step(&z, a).unwrap();
        for (gi, ri) in g.iter_mut().zip(&r) {
            *gi += disc * ri;
        }
        disc *= discount;
        z = next;
    }
    let v = PlanningModel::terminal_value(m, &z, rng).unwrap();
    for (gi, vi) in g.iter_mut().zip(&v) {
        *gi += disc * vi;
    }
    g
}

fn with_termination_logit(mut m: WorldModel, bias: f64) -> WorldModel {
    let (w, b) = (m.termination_head().output_weight(), m.termination_head().output_bias());
    m.params_mut().get_mut(w).data_mut().fill(0.0);
    m.params_mut().get_mut(b).data_mut().fill(bias);
    m
}

fn criterion_2() -> Outcome {
    let never = with_termination_logit(tiny_model(3), -1.0e3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1000;
    let z0 = normal(n, never.latent_dim(), &mut rng);
    let actions: Vec<DenseArray> = (0..3).map(|_| normal(n, ACTION_DIM, &mut rng).map(|v| v.clamp(-1.0, 1.0))).collect();
    let (_, _, d) = never.step(&z0, &actions[0]).unwrap();
    let zero_head = d.iter().all(|&p| p == 0.0);
    let got = score_rollouts(&never, &z0, &actions, 0.97, TruncationMode::Soft, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let want = reference_score(&never, &z0, &actions, 0.97, &mut ChaCha8Rng::seed_from_u64(5));
    let mismatches = got.iter().zip(&want).filter(|(a, b)| a.to_bits() != b.to_bits()).count();

    let always = with_termination_logit(tiny_model(3), 1.0e3);
    let (_, r0, _) = always.step(&z0, &actions[0]).unwrap();
    let s = score_rollouts(&always, &z0, &actions, 0.97, TruncationMode::Soft, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let first_only = s.iter().zip(&r0).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    verdict(
        zero_head && mismatches == 0 && first_only == 0,
        format!("{mismatches}/{n} bit mismatches vs no-termination reference; {first_only}/{n} scores differ from r0 when the first step terminates"),
    )
}

fn criterion_3() -> Outcome {
    let stub = TableStub {
        rewards: vec![1.0, 1.0],
        terminations: vec![0.5, 0.0],
        terminal_value: 10.0,
        action_dim: 1,
    };
    let s = score_rollout(&stub, &DenseArray::zeros(&[1, 1]), &[vec![0.0], vec![0.0]], 0.97, TruncationMode::Soft, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    // 1 + 0.97·0.5·1 + 0.97²·0.5·10 = 6.1895 exactly; the stated 6.18945 is an arithmetic slip.
    let expected = 1.0 + 0.97 * 0.5 + 0.97 * 0.97 * 0.5 * 10.0;
    verdict(
        (s - expected).abs() < 1e-12 && (expected - 6.1895).abs() < 1e-12,
        format!("score {s:.12} vs hand value 6.1895 (stated 6.18945 differs by 5e-5)"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let target: Vec<f64> = (0..ACTION_DIM).map(|_| rng.random_range(-0.9..0.9)).collect();
        let stub = QuadraticStub { target: target.clone() };
        let out = plan(&stub, &DenseArray::zeros(&[1, 1]), None, &PlannerConfig::default(), false, k).unwrap();
        let err = out.action.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(err);
        hits += usize::from(err < 0.05);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(hits == 20 && secs < 30.0, format!("{hits}/20 within 0.05 (worst {worst:.4}), {secs:.2} s"))
}

fn criterion_5() -> Outcome {
    let mut m = tiny_model(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = 64;
    let rewards: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
    let terminals: Vec<f64> = (0..b).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let z = normal(b, m.latent_dim(), &mut rng);
    let noise = normal(b, ACTION_DIM, &mut rng);
    let before = m.td_target(&rewards, &terminals, &z, (0, 1), &noise, 0.97).unwrap();
    let ids: Vec<_> = m.target_params().ids().collect();
    for id in ids {
        for v in m.target_params_mut().get_mut(id).data_mut() {
            *v += rng.random_range(-5.0..5.0);
        }
    }
    let after = m.td_target(&rewards, &terminals, &z, (0, 1), &noise, 0.97).unwrap();
    let term_equal = (0..b).filter(|&i| terminals[i] == 1.0).all(|i| before[i].to_bits() == after[i].to_bits() && before[i] == rewards[i]);
    let others_moved = (0..b).filter(|&i| terminals[i] == 0.0).any(|i| before[i] != after[i]);
    verdict(
        term_equal && others_moved,
        format!("terminal targets unchanged: {term_equal}; non-terminal targets react to the perturbation: {others_moved}"),
    )
}

fn criterion_6() -> Outcome {
    let env = EnvConfig::default();
    let clips = generate_clips(6, 20, 40, env.dt, 0).unwrap();
    let data = generate_offline_rollouts(&clips, &env, COMMAND_HORIZON, 2, 0.2, 0).unwrap();
    let sampler = OfflineSampler::new(&data, 3).unwrap();
    let mut online = ReplayBuffer::new(10_000, data.obs_dim(), data.action_dim()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for ep in &data.episodes {
        for t in 0..ep.len() {
            online.push(&ep.obs[t], &ep.actions[t], ep.rewards[t], &ep.obs[t + 1], ep.terminal_at(t)).unwrap();
        }
        online.end_episode();
    }
    let mut exact = 0;
    for _ in 0..1000 {
        let batch = sample_mixed_batch(Some((&data, &sampler)), &online, 256, 0.5, 3, &mut rng).unwrap();
        exact += usize::from(batch.count(false) == 128 && batch.count(true) == 128);
    }
    verdict(exact == 1000, format!("{exact}/1000 batches split 128 offline / 128 online"))
}

fn tiny_run_config(dir: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.seed = 7;
    c.model = ModelConfig {
        encoder_dim: 16,
        mlp_dim: 16,
        latent_dim: 8,
        num_q: 2,
        ..ModelConfig::default()
    };
    c.planner = PlannerConfig {
        iterations: 2,
        population: 32,
        prior_samples: 4,
        elites: 8,
        ..PlannerConfig::default()
    };
    c.optim.batch_size = 16;
    c.tracker.steps = 120;
    c.tracker.seed_steps = 30;
    c.tracker.checkpoint_every = 0;
    c.puppeteer.steps = 40;
    c.puppeteer.seed_steps = 10;
    c.puppeteer.checkpoint_every = 0;
    c.task.episode_limit = 30;
    c.paths.out_dir = dir.display().to_string();
    c
}

fn criterion_10() -> Outcome {
    let run = || -> Vec<Vec<u8>> {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny_run_config(dir.path());
        let clips = generate_clips(4, 30, 40, c.env.dt, c.seed).unwrap();
        let data = generate_offline_rollouts(&clips, &c.env, COMMAND_HORIZON, 2, 0.2, c.seed).unwrap();
        let p = |n: &str| TrainPaths {
            log: dir.path().join(format!("{n}.jsonl")),
            checkpoint: dir.path().join(format!("{n}.json")),
        };
        let t = train_tracker(&c, Some(&data), &p("tracker")).unwrap();
        let pup = train_puppeteer(&c, &t.model, &p("puppeteer")).unwrap();
        let eval_path = dir.path().join("eval.jsonl");
        let mut w = JsonlWriter::create(&eval_path).unwrap();
        evaluate(&c, &t.model, &pup.model, ActionSelection::Plan, 2, Some(&mut w)).unwrap();
        drop(w);
        ["tracker.jsonl", "tracker.json.bin", "puppeteer.jsonl", "puppeteer.json.bin", "eval.jsonl"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect()
    };
    let (a, b) = (run(), run());
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    verdict(same == a.len(), format!("{same}/{} artifacts byte-identical across two same-seed runs", a.len()))
}

fn criterion_11() -> Outcome {
    let cfg = EnvConfig::default();
    let void = Terrain::void();
    let mut s = PuppetState::unloaded(0.0, 10.0);
    let v0 = 1.5;
    for b in 0..physics::NUM_BODIES {
        s.vel[b][1] = v0;
    }
    let steps = (1.0 / cfg.dt).round() as usize;
    let mut worst: f64 = 0.0;
    for n in 1..=steps {
        physics::integrate(&mut s, physics::REST_OFFSETS, &void, &cfg);
        let t = n as f64 * cfg.dt;
        let z = 10.0 + v0 * t - 0.5 * cfg.gravity * t * t;
        worst = worst.max((s.pos[physics::TORSO][1] - z).abs());
    }
    let mut env = PuppetEnv::reset(&TaskConfig::for_task(TaskKind::Stand), &cfg, 0).unwrap();
    let p0 = env.state().pos;
    for _ in 0..100 {
        env.step(&[0.0; ACTION_DIM]).unwrap();
    }
    let drift = env
        .state()
        .pos
        .iter()
        .zip(&p0)
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    verdict(
        worst < 1e-6 && drift < 1e-3,
        format!("free-fall error {worst:.2e} m over 1 s; rest drift {drift:.2e} m over 100 steps"),
    )
}

const FULL_ENV: &str = "PUPPETEER_ACCEPTANCE_FULL";
const ARM_BUDGET: Duration = Duration::from_secs(4 * 3600);

fn full_budget() -> bool {
    std::env::var(FULL_ENV).is_ok_and(|v| v == "1")
}

fn not_run(what: &str) -> Outcome {
    Outcome::NotRun(format!(
        "{what}; needs the full desk budget (about 0.4 s per step on one core, far beyond the per-arm limit); set {FULL_ENV}=1 to run"
    ))
}

fn full_dataset(c: &RunConfig) -> OfflineDataset {
    let d = &c.data;
    let clips = generate_clips(d.num_clips, d.clip_min_frames, d.clip_max_frames, c.env.dt, c.seed).unwrap();
    generate_offline_rollouts(&clips, &c.env, COMMAND_HORIZON, d.rollouts_per_clip, d.noise_scale, c.seed).unwrap()
}

fn tracker_success(c: &RunConfig, model: &WorldModel, data: &OfflineDataset) -> f64 {
    let mut policy = ModelTracker {
        model,
        selector: ActionSelector::new(&c.planner, ActionSelection::Plan, c.seed),
    };
    let r = rollout_clips(&mut policy, &data.clips, &c.env, COMMAND_HORIZON).unwrap();
    success_rate(&r).unwrap()
}

fn criterion_7(dir: &Path) -> Outcome {
    if !full_budget() {
        return not_run("tracker success and ablation ordering at 200k steps");
    }
    let base = RunConfig::default();
    let data = full_dataset(&base);
    let arms = [("ours", 0.5, 1.0), ("25%-data", 0.5, 0.25), ("offline-only", 1.0, 1.0)];
    let mut rates = Vec::new();
    let mut within_budget = true;
    for (name, ratio, fraction) in arms {
        let mut c = base.clone();
        c.data.offline_ratio = ratio;
        c.data.data_fraction = fraction;
        let start = Instant::now();
        let out = train_tracker(&c, Some(&data), &TrainPaths {
            log: dir.join(format!("tracker_{name}.jsonl")),
            checkpoint: dir.join(format!("tracker_{name}.json")),
        })
        .unwrap();
        within_budget &= start.elapsed() <= ARM_BUDGET;
        rates.push(tracker_success(&c, &out.model, &data));
    }
    verdict(
        rates[0] >= 60.0 && rates[0] > rates[1] && rates[1] > rates[2] && within_budget,
        format!("success ours {:.1}%, 25%-data {:.1}%, offline-only {:.1}%; every arm within 4 h: {within_budget}", rates[0], rates[1], rates[2]),
    )
}

fn trained_hierarchy(dir: &Path, seed: u64) -> (RunConfig, WorldModel, WorldModel) {
    let mut c = RunConfig::default();
    c.seed = seed;
    c.task = TaskConfig::for_task(TaskKind::Gaps);
    let tracker_path = dir.join("tracker_ours.json");
    let tracker = if tracker_path.exists() {
        WorldModel::load(&tracker_path).unwrap().0
    } else {
        let data = full_dataset(&c);
        train_tracker(&c, Some(&data), &TrainPaths {
            log: dir.join("tracker_ours.jsonl"),
            checkpoint: tracker_path,
        })
        .unwrap()
        .model
    };
    let pup = train_puppeteer(&c, &tracker, &TrainPaths {
        log: dir.join(format!("puppeteer_gaps_{seed}.jsonl")),
        checkpoint: dir.join(format!("puppeteer_gaps_{seed}.json")),
    })
    .unwrap()
    .model;
    (c, tracker, pup)
}

fn criterion_8(dir: &Path) -> Outcome {
    if !full_budget() {
        return not_run("hierarchical return on gaps at 150k steps vs scripted baseline and policy prior");
    }
    let (c, tracker, pup) = trained_hierarchy(dir, 0);
    let mean = |r: &[puppeteer_core::env::EpisodeResult]| EvalAggregate::from_results("", &c, r).mean_return;
    let planned = mean(&evaluate(&c, &tracker, &pup, ActionSelection::Plan, 10, None).unwrap());
    let prior = mean(&evaluate(&c, &tracker, &pup, ActionSelection::Policy, 10, None).unwrap());
    let scripted = mean(&scripted_baseline(&c, 10, None).unwrap());
    verdict(
        planned >= 2.0 * scripted && planned > prior,
        format!("mean return planner {planned:.1}, policy prior {prior:.1}, scripted baseline {scripted:.1}"),
    )
}

fn criterion_9(dir: &Path) -> Outcome {
    if !full_budget() {
        return not_run("gap-length sweep 0.1 to 1.2 m over 3 seeds");
    }
    let mut at_04 = Vec::new();
    let mut at_12 = Vec::new();
    for seed in 0..3 {
        let (c, tracker, pup) = trained_hierarchy(dir, seed);
        let rows = gap_sweep(&c, &tracker, &pup, ActionSelection::Plan, &c.eval.gap_sweep, c.eval.episodes).unwrap();
        let at = |g: f64| rows.iter().find(|r| (r.gap_length - g).abs() < 1e-9).map_or(f64::NAN, |r| r.normalized_score);
        at_04.push(at(0.4));
        at_12.push(at(1.2));
    }
    let m04 = at_04.iter().sum::<f64>() / 3.0;
    let m12 = at_12.iter().sum::<f64>() / 3.0;
    let positive = at_12.iter().filter(|&&s| s > 0.0).count();
    verdict(
        m04 > m12 && positive >= 1,
        format!("mean normalized score 0.4 m {m04:.3} vs 1.2 m {m12:.3}; seeds with positive score at 1.2 m: {positive}/3"),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7(dir.path())),
        (8, criterion_8(dir.path())),
        (9, criterion_9(dir.path())),
        (10, criterion_10()),
        (11, criterion_11()),
    ];
    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Outcome::Pass(d) => println!("criterion {n:>2}: PASS | {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL | {d}");
            }
            Outcome::NotRun(d) => println!("criterion {n:>2}: NOT RUN | {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
