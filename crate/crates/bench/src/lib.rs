//! Fixtures shared by the benchmarks.

use puppeteer_core::agents::{COMMAND_HORIZON, TRACKER_OBS_DIM};
use puppeteer_core::config::{EnvConfig, ModelConfig};
use puppeteer_core::data::{generate_clips, generate_offline_rollouts, OfflineDataset};
use puppeteer_core::env::ACTION_DIM;
use puppeteer_core::world_model::{Role, WorldModel};

pub fn tracker(cfg: &ModelConfig) -> WorldModel {
    WorldModel::new(Role::Tracker, cfg, TRACKER_OBS_DIM, ACTION_DIM, 0).expect("valid model config")
}

pub fn small_dataset() -> OfflineDataset {
    let env = EnvConfig::default();
    let clips = generate_clips(8, 100, 150, env.dt, 0).expect("valid clip range");
    generate_offline_rollouts(&clips, &env, COMMAND_HORIZON, 2, 0.2, 0).expect("clips are long enough")
}
