//! Run configuration. Every tunable lives here with its default; JSON files
//! and `key=value` overrides are validated against this schema and unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder_dim: usize,
    pub mlp_dim: usize,
    pub latent_dim: usize,
    pub num_q: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_dim: 64,
            mlp_dim: 128,
            latent_dim: 64,
            num_q: 5,
            log_std_min: -10.0,
            log_std_max: 2.0,
            layer_norm_eps: 1e-5,
        }
    }
}

/// How predicted terminations weight a latent rollout's later terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    /// Cumulative survival weight `w_{t+1} = w_t (1 - δ̂_t)`, floored at 0.
    Soft,
    /// Termination probabilities capped at 0: plain un-truncated returns.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub iterations: usize,
    pub population: usize,
    pub prior_samples: usize,
    pub elites: usize,
    pub temperature: f64,
    pub discount: f64,
    pub std_init: f64,
    pub std_floor: f64,
    pub std_max: f64,
    pub truncation: TruncationMode,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            iterations: 8,
            population: 512,
            prior_samples: 24,
            elites: 64,
            temperature: 0.5,
            discount: 0.97,
            std_init: 0.5,
            std_floor: 0.05,
            std_max: 2.0,
            truncation: TruncationMode::Soft,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.iterations == 0 || self.population == 0 {
            return Err(Error::config("planner horizon, iterations and population must be >= 1"));
        }
        if self.prior_samples > self.population {
            return Err(Error::config("planner.prior_samples exceeds planner.population"));
        }
        if self.elites == 0 || self.elites > self.population {
            return Err(Error::config("planner.elites must be in 1..=population"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::config("planner.temperature must be > 0"));
        }
        if !(0.0 < self.discount && self.discount < 1.0) {
            return Err(Error::config("planner.discount must be in (0, 1)"));
        }
        if !(0.0 < self.std_floor && self.std_floor <= self.std_init && self.std_init <= self.std_max) {
            return Err(Error::config("planner std bounds must satisfy 0 < floor <= init <= max"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub encoder_lr: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub consistency_coef: f64,
    pub reward_coef: f64,
    pub value_coef: f64,
    pub termination_coef: f64,
    pub temporal_coef: f64,
    pub entropy_coef: f64,
    pub target_momentum: f64,
    pub discount: f64,
    pub update_to_data: usize,
    /// Rate of the moving 5%–95% percentile range used to normalize Q in
    /// the policy loss.
    pub percentile_rate: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            encoder_lr: 1e-4,
            clip_norm: 20.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 256,
            consistency_coef: 20.0,
            reward_coef: 0.1,
            value_coef: 0.1,
            termination_coef: 0.1,
            temporal_coef: 0.5,
            entropy_coef: 1e-4,
            target_momentum: 0.99,
            discount: 0.97,
            update_to_data: 1,
            percentile_rate: 0.01,
        }
    }
}

impl OptimConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            clip_norm: self.clip_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| 0.0 < v && v < 1.0;
        if !(unit(self.temporal_coef) && unit(self.discount) && unit(self.target_momentum)) {
            return Err(Error::config("temporal_coef, discount and target_momentum must lie in (0, 1)"));
        }
        let coefs = [self.consistency_coef, self.reward_coef, self.value_coef, self.entropy_coef];
        if coefs.iter().any(|&c| c < 0.0) || self.termination_coef < 0.0 {
            return Err(Error::config("loss coefficients must be non-negative"));
        }
        if self.lr <= 0.0 || self.encoder_lr <= 0.0 || self.clip_norm <= 0.0 {
            return Err(Error::config("learning rates and clip norm must be > 0"));
        }
        if self.batch_size == 0 || self.update_to_data == 0 {
            return Err(Error::config("batch_size and update_to_data must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Stand,
    Walk,
    Run,
    Corridor,
    Hurdles,
    Walls,
    Gaps,
    Stairs,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::Stand,
        TaskKind::Walk,
        TaskKind::Run,
        TaskKind::Corridor,
        TaskKind::Hurdles,
        TaskKind::Walls,
        TaskKind::Gaps,
        TaskKind::Stairs,
    ];

    /// Terrain-conditioned tasks observe the height-field and use the
    /// forward-velocity reward; the rest use the speed-plus-head-height reward.
    pub fn is_visual(self) -> bool {
        !matches!(self, TaskKind::Stand | TaskKind::Walk | TaskKind::Run)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Stand => "stand",
            TaskKind::Walk => "walk",
            TaskKind::Run => "run",
            TaskKind::Corridor => "corridor",
            TaskKind::Hurdles => "hurdles",
            TaskKind::Walls => "walls",
            TaskKind::Gaps => "gaps",
            TaskKind::Stairs => "stairs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub name: TaskKind,
    pub gap_min: f64,
    pub gap_max: f64,
    /// Fixes every gap to this length (zero-shot generalization sweeps).
    pub gap_length: Option<f64>,
    pub gap_spacing_min: f64,
    pub gap_spacing_max: f64,
    pub hurdle_height_min: f64,
    pub hurdle_height_max: f64,
    pub hurdle_width: f64,
    pub hurdle_spacing_min: f64,
    pub hurdle_spacing_max: f64,
    pub wall_height_min: f64,
    pub wall_height_max: f64,
    pub wall_width_min: f64,
    pub wall_width_max: f64,
    pub wall_spacing_min: f64,
    pub wall_spacing_max: f64,
    pub stair_rise_min: f64,
    pub stair_rise_max: f64,
    pub stair_run_min: f64,
    pub stair_run_max: f64,
    pub episode_limit: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            name: TaskKind::Gaps,
            gap_min: 0.1,
            gap_max: 0.4,
            gap_length: None,
            gap_spacing_min: 1.5,
            gap_spacing_max: 3.0,
            hurdle_height_min: 0.05,
            hurdle_height_max: 0.2,
            hurdle_width: 0.1,
            hurdle_spacing_min: 2.0,
            hurdle_spacing_max: 4.0,
            wall_height_min: 0.1,
            wall_height_max: 0.25,
            wall_width_min: 0.6,
            wall_width_max: 1.2,
            wall_spacing_min: 2.0,
            wall_spacing_max: 4.0,
            stair_rise_min: 0.04,
            stair_rise_max: 0.1,
            stair_run_min: 0.4,
            stair_run_max: 0.8,
            episode_limit: 500,
        }
    }
}

impl TaskConfig {
    pub fn for_task(name: TaskKind) -> Self {
        Self {
            name,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("gap", self.gap_min, self.gap_max),
            ("gap_spacing", self.gap_spacing_min, self.gap_spacing_max),
            ("hurdle_height", self.hurdle_height_min, self.hurdle_height_max),
            ("hurdle_spacing", self.hurdle_spacing_min, self.hurdle_spacing_max),
            ("wall_height", self.wall_height_min, self.wall_height_max),
            ("wall_width", self.wall_width_min, self.wall_width_max),
            ("wall_spacing", self.wall_spacing_min, self.wall_spacing_max),
            ("stair_rise", self.stair_rise_min, self.stair_rise_max),
            ("stair_run", self.stair_run_min, self.stair_run_max),
        ];
        for (name, lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::config(format!("task.{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if let Some(g) = self.gap_length {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::config("task.gap_length must be a non-negative length"));
            }
        }
        if self.hurdle_width <= 0.0 {
            return Err(Error::config("task.hurdle_width must be > 0"));
        }
        if self.episode_limit == 0 {
            return Err(Error::config("task.episode_limit must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub dt: f64,
    pub substeps: usize,
    pub gravity: f64,
    pub friction: f64,
    pub v_target: f64,
    pub head_height_coef: f64,
    pub tracking_sigma: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 10,
            gravity: 9.81,
            friction: 1.0,
            v_target: 6.0,
            head_height_coef: 1.0,
            tracking_sigma: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub num_clips: usize,
    pub rollouts_per_clip: usize,
    pub noise_scale: f64,
    pub clip_min_frames: usize,
    pub clip_max_frames: usize,
    /// Fraction of each batch drawn from offline data (1.0 = offline only,
    /// 0.0 = online only).
    pub offline_ratio: f64,
    /// Fraction of the clip set available to training (data-size ablation).
    pub data_fraction: f64,
    pub buffer_capacity: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_clips: 24,
            rollouts_per_clip: 20,
            noise_scale: 0.2,
            clip_min_frames: 100,
            clip_max_frames: 200,
            offline_ratio: 0.5,
            data_fraction: 1.0,
            buffer_capacity: 1_000_000,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clips == 0 || self.rollouts_per_clip == 0 {
            return Err(Error::config("data.num_clips and data.rollouts_per_clip must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.offline_ratio) {
            return Err(Error::config("data.offline_ratio must lie in [0, 1]"));
        }
        if !(0.0 < self.data_fraction && self.data_fraction <= 1.0) {
            return Err(Error::config("data.data_fraction must lie in (0, 1]"));
        }
        if self.clip_min_frames < 5 || self.clip_min_frames > self.clip_max_frames || self.clip_max_frames > 500 {
            return Err(Error::config("data clip frame range must satisfy 5 <= min <= max <= 500"));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::config("data.noise_scale must be >= 0"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("data.buffer_capacity must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSelection {
    /// Full planner (MPPI over the latent model).
    Plan,
    /// Policy-prior mean only, no planning.
    Policy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub seed_steps: usize,
    pub log_every: usize,
    pub checkpoint_every: usize,
    pub action_selection: ActionSelection,
}

impl TrainConfig {
    fn tracker() -> Self {
        Self {
            steps: 200_000,
            seed_steps: 2_500,
            log_every: 1_000,
            checkpoint_every: 50_000,
            action_selection: ActionSelection::Plan,
        }
    }

    fn puppeteer() -> Self {
        Self {
            steps: 150_000,
            ..Self::tracker()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::tracker()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyConfig {
    /// Low-level steps per high-level step.
    pub k: usize,
    pub freeze_tracker: bool,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            k: 1,
            freeze_tracker: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub action_selection: ActionSelection,
    /// Gap lengths for the generalization sweep.
    pub gap_sweep: Vec<f64>,
    /// Clips evaluated by the tracking metrics (0 = all).
    pub clips: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            action_selection: ActionSelection::Plan,
            gap_sweep: vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0, 1.2],
            clips: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub out_dir: String,
    pub dataset: String,
    pub tracker_checkpoint: String,
    pub puppeteer_checkpoint: String,
    pub source_checkpoint: Option<String>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            out_dir: "runs/default".into(),
            dataset: "runs/data/offline.json".into(),
            tracker_checkpoint: "runs/tracker/tracker.json".into(),
            puppeteer_checkpoint: "runs/puppeteer/puppeteer.json".into(),
            source_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskConfig,
    pub env: EnvConfig,
    pub model: ModelConfig,
    pub planner: PlannerConfig,
    pub optim: OptimConfig,
    pub data: DataConfig,
    pub tracker: TrainConfig,
    pub puppeteer: TrainConfig,
    pub hierarchy: HierarchyConfig,
    pub eval: EvalConfig,
    pub paths: PathConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: TaskConfig::default(),
            env: EnvConfig::default(),
            model: ModelConfig::default(),
            planner: PlannerConfig::default(),
            optim: OptimConfig::default(),
            data: DataConfig::default(),
            tracker: TrainConfig::tracker(),
            puppeteer: TrainConfig::puppeteer(),
            hierarchy: HierarchyConfig::default(),
            eval: EvalConfig::default(),
            paths: PathConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.optim.validate()?;
        self.task.validate()?;
        self.data.validate()?;
        let m = &self.model;
        if m.encoder_dim == 0 || m.mlp_dim == 0 || m.latent_dim == 0 || m.num_q < 2 {
            return Err(Error::config("model dims must be >= 1 and model.num_q >= 2"));
        }
        if m.log_std_min >= m.log_std_max {
            return Err(Error::config("model.log_std_min must be below model.log_std_max"));
        }
        if self.hierarchy.k == 0 {
            return Err(Error::config("hierarchy.k must be >= 1"));
        }
        if self.planner.horizon != 3 {
            // Commands carry exactly H future frames; the tracker's input
            // width depends on it, so it stays pinned.
            log::debug!("planner horizon {} differs from the default 3", self.planner.horizon);
        }
        let e = &self.env;
        if e.dt <= 0.0 || e.substeps == 0 || e.gravity < 0.0 || e.tracking_sigma <= 0.0 {
            return Err(Error::config("env.dt, env.substeps and env.tracking_sigma must be > 0"));
        }
        Ok(())
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_value(value)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Applies `dotted.key=value` overrides on top of `base` (or the
    /// defaults). Values parse as JSON, falling back to a bare string.
    pub fn with_overrides(base: Option<serde_json::Value>, overrides: &[String]) -> Result<Self> {
        let mut value = match base {
            Some(v) => {
                // Validate the file first so unknown keys there are reported.
                RunConfig::from_value(v.clone())?;
                serde_json::to_value(serde_json::from_value::<RunConfig>(v)?)?
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override {item:?} is not key=value")))?;
            set_dotted(&mut value, key.trim(), raw.trim())?;
        }
        Self::from_value(value)
    }
}

fn set_dotted(root: &mut serde_json::Value, key: &str, raw: &str) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("unknown config key {key:?}")))?;
        if !obj.contains_key(*part) {
            return Err(Error::config(format!("unknown config key {key:?}")));
        }
        if i + 1 == parts.len() {
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj.get_mut(*part).unwrap();
    }
    Err(Error::config(format!("unknown config key {key:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_hyperparameter_table() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.planner.horizon, 3);
        assert_eq!(c.planner.iterations, 8);
        assert_eq!(c.planner.population, 512);
        assert_eq!(c.planner.prior_samples, 24);
        assert_eq!(c.planner.elites, 64);
        assert_eq!(c.planner.temperature, 0.5);
        assert_eq!(c.model.num_q, 5);
        assert_eq!((c.model.log_std_min, c.model.log_std_max), (-10.0, 2.0));
        assert_eq!(c.optim.batch_size, 256);
        assert_eq!(c.optim.consistency_coef, 20.0);
        assert_eq!(c.optim.termination_coef, 0.1);
        assert_eq!(c.optim.temporal_coef, 0.5);
        assert_eq!(c.optim.target_momentum, 0.99);
        assert_eq!(c.optim.entropy_coef, 1e-4);
        assert_eq!(c.optim.lr, 3e-4);
        assert_eq!(c.optim.encoder_lr, 1e-4);
        assert_eq!(c.optim.clip_norm, 20.0);
        assert_eq!(c.optim.discount, 0.97);
        assert_eq!(c.data.buffer_capacity, 1_000_000);
        assert_eq!(c.tracker.seed_steps, 2_500);
        assert_eq!(c.hierarchy.k, 1);
        assert_eq!(c.task.episode_limit, 500);
        assert_eq!(c.env.v_target, 6.0);
    }

    #[test]
    fn unknown_override_key_is_named() {
        let err = RunConfig::with_overrides(None, &["planner.horizn=4".into()]).unwrap_err();
        assert!(err.to_string().contains("planner.horizn"), "{err}");
    }

    #[test]
    fn unknown_file_key_rejected() {
        let v = serde_json::json!({"seed": 1, "bogus": 2});
        let err = RunConfig::from_value(v).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn gap_override_applies() {
        let c = RunConfig::with_overrides(None, &["task.gap_length=1.2".into(), "task.name=gaps".into()]).unwrap();
        assert_eq!(c.task.gap_length, Some(1.2));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::with_overrides(None, &["planner.elites=1000".into()]).is_err());
        assert!(RunConfig::with_overrides(None, &["hierarchy.k=0".into()]).is_err());
        assert!(RunConfig::with_overrides(None, &["task.gap_min=0.5".into()]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        let mut c = RunConfig::default();
        c.seed = 7;
        c.task.gap_length = Some(0.9);
        c.save(&p).unwrap();
        let back = RunConfig::load(&p).unwrap();
        assert_eq!(back, c);
        back.save(&p).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), back);
    }
}
