use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use puppeteer_bench::{small_dataset, tracker};
use puppeteer_core::config::{ModelConfig, OptimConfig, PlannerConfig, TaskConfig, TaskKind};
use puppeteer_core::data::{sample_mixed_batch, OfflineSampler, ReplayBuffer};
use puppeteer_core::env::PuppetEnv;
use puppeteer_core::numeric::DenseArray;
use puppeteer_core::planner::plan;
use puppeteer_core::world_model::Learner;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn env_step(c: &mut Criterion) {
    let cfg = puppeteer_core::config::EnvConfig::default();
    let task = TaskConfig::for_task(TaskKind::Gaps);
    c.bench_function("env_step", |b| {
        let mut env = PuppetEnv::reset(&task, &cfg, 0).unwrap();
        b.iter(|| {
            if env.is_closed() {
                env = PuppetEnv::reset(&task, &cfg, 0).unwrap();
            }
            black_box(env.step(&[0.1, 0.0, 0.2, -0.1, -0.2, 0.1]).unwrap());
        })
    });
}

fn planning(c: &mut Criterion) {
    let model = tracker(&ModelConfig::default());
    let z = model.encode_batch(&DenseArray::row(vec![0.1; model.obs_dim()])).unwrap();
    let cfg = PlannerConfig::default();
    let mut g = c.benchmark_group("plan");
    g.sample_size(10);
    g.bench_function("default_tracker", |b| b.iter(|| black_box(plan(&model, &z, None, &cfg, false, 0).unwrap())));
    g.finish();
}

fn update(c: &mut Criterion) {
    let data = small_dataset();
    let sampler = OfflineSampler::new(&data, 3).unwrap();
    let empty = ReplayBuffer::new(1, data.obs_dim(), data.action_dim()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = sample_mixed_batch(Some((&data, &sampler)), &empty, 256, 1.0, 3, &mut rng).unwrap();
    let mut learner = Learner::new(tracker(&ModelConfig::default()), &OptimConfig::default(), 0).unwrap();
    let mut g = c.benchmark_group("update");
    g.sample_size(10);
    g.bench_function("default_batch_256", |b| b.iter(|| black_box(learner.update(&batch).unwrap())));
    g.finish();
}

criterion_group!(benches, env_step, planning, update);
criterion_main!(benches);
