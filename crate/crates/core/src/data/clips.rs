//! Scripted-gait reference clips.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::physics::{ACTION_SCALE, REST_OFFSETS};
use crate::env::NUM_EFFECTORS;
use crate::error::{Error, Result};

pub type Frame = [[f64; 2]; NUM_EFFECTORS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gait {
    Stand,
    Walk,
    Run,
    Hop,
}

impl Gait {
    pub const ALL: [Gait; 4] = [Gait::Stand, Gait::Walk, Gait::Run, Gait::Hop];
}

/// Gait parameters. Offsets are periodic with an integer period in frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub gait: Gait,
    pub period: usize,
    /// Fore-aft foot swing amplitude, metres.
    pub stride: f64,
    /// Foot lift height, metres.
    pub lift: f64,
    /// Forward head lean, metres.
    pub lean: f64,
}

/// Target end-effector offsets (torso frame) per frame, plus the nominal
/// torso speed they correspond to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceClip {
    pub id: usize,
    pub params: GaitParams,
    pub frames: Vec<Frame>,
    pub torso_velocity: Vec<f64>,
}

impl ReferenceClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame `t`, holding the last frame past the end.
    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t.min(self.frames.len() - 1)]
    }

    pub fn from_params(id: usize, params: GaitParams, len: usize, dt: f64) -> Result<Self> {
        if params.period == 0 && params.gait != Gait::Stand {
            return Err(Error::contract("gait period must be positive"));
        }
        let frames: Vec<Frame> = (0..len).map(|t| gait_frame(&params, t)).collect();
        let speed = match params.gait {
            Gait::Stand => 0.0,
            _ => 4.0 * params.stride / (params.period as f64 * dt),
        };
        Ok(Self {
            id,
            params,
            torso_velocity: vec![speed; len],
            frames,
        })
    }

    pub fn within_action_box(&self) -> bool {
        self.frames.iter().all(|f| {
            (0..NUM_EFFECTORS).all(|e| {
                (0..2).all(|k| (f[e][k] - REST_OFFSETS[e][k]).abs() <= ACTION_SCALE[e][k] + 1e-12)
            })
        })
    }
}

/// Offsets for frame `t`. Every gait starts at the rest pose.
pub fn gait_frame(p: &GaitParams, t: usize) -> Frame {
    let mut f = REST_OFFSETS;
    if p.gait == Gait::Stand {
        return f;
    }
    // Reduce the phase modulo the period first so frame t+P matches frame t.
    let phase = 2.0 * PI * (t % p.period) as f64 / p.period as f64;
    let s = phase.sin();
    f[0][0] += p.lean * (1.0 - phase.cos()) * 0.5;
    match p.gait {
        Gait::Walk | Gait::Run => {
            f[1][0] += p.stride * s;
            f[2][0] -= p.stride * s;
            f[1][1] += p.lift * s.max(0.0);
            f[2][1] += p.lift * (-s).max(0.0);
            f[0][1] -= 0.25 * p.lift * s.abs();
        }
        Gait::Hop => {
            let up = p.lift * s.abs();
            f[1][1] += up;
            f[2][1] += up;
            f[1][0] += p.stride * s;
            f[2][0] += p.stride * s;
            f[0][1] -= 0.5 * up;
        }
        Gait::Stand => unreachable!(),
    }
    f
}

fn sample_params(gait: Gait, rng: &mut ChaCha8Rng) -> GaitParams {
    match gait {
        Gait::Stand => GaitParams {
            gait,
            period: 1,
            stride: 0.0,
            lift: 0.0,
            lean: 0.0,
        },
        Gait::Walk => GaitParams {
            gait,
            period: rng.random_range(30..=50),
            stride: rng.random_range(0.10..0.25),
            lift: rng.random_range(0.05..0.15),
            lean: rng.random_range(0.0..0.05),
        },
        Gait::Run => GaitParams {
            gait,
            period: rng.random_range(16..=26),
            stride: rng.random_range(0.20..0.35),
            lift: rng.random_range(0.10..0.25),
            lean: rng.random_range(0.05..0.15),
        },
        Gait::Hop => GaitParams {
            gait,
            period: rng.random_range(20..=36),
            stride: rng.random_range(0.0..0.15),
            lift: rng.random_range(0.08..0.25),
            lean: rng.random_range(0.0..0.05),
        },
    }
}

/// `count` clips cycling through the gait families with randomized
/// frequency and amplitude; lengths uniform in `[min_frames, max_frames]`.
pub fn generate_clips(count: usize, min_frames: usize, max_frames: usize, dt: f64, seed: u64) -> Result<Vec<ReferenceClip>> {
    if count == 0 {
        return Err(Error::contract("clip count must be at least 1"));
    }
    if min_frames < 4 || max_frames < min_frames || max_frames > 500 {
        return Err(Error::contract(format!("invalid clip length range [{min_frames}, {max_frames}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let gait = Gait::ALL[id % Gait::ALL.len()];
            let params = sample_params(gait, &mut rng);
            let len = rng.random_range(min_frames..=max_frames);
            ReferenceClip::from_params(id, params, len, dt)
        })
        .collect()
}
