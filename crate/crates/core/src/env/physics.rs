//! Point-mass puppet: a torso carrying three end-effectors (head and two
//! feet) on spring-damper actuators, with penalty ground contact.
//!
//! Each substep evaluates internal and contact forces at the start of the
//! substep, updates velocities, and advances positions with the
//! post-force velocity plus an exact constant-gravity term, so free fall
//! reproduces `z0 + v0 t - g t²/2` to rounding.

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::env::terrain::Terrain;

/// Number of end-effectors.
pub const NUM_EFFECTORS: usize = 3;
pub const ACTION_DIM: usize = 2 * NUM_EFFECTORS;
pub const TORSO: usize = 0;
pub const HEAD: usize = 1;
pub const FOOT_L: usize = 2;
pub const FOOT_R: usize = 3;
pub const NUM_BODIES: usize = 4;

pub const TORSO_MASS: f64 = 10.0;
pub const EFFECTOR_MASS: f64 = 1.0;
/// Commanded offsets for a zero action, `(dx, dz)` per effector.
pub const REST_OFFSETS: [[f64; 2]; NUM_EFFECTORS] = [[0.0, 0.3], [-0.1, -0.75], [0.1, -0.75]];
/// Half-width of each effector's command box around its rest offset.
pub const ACTION_SCALE: [[f64; 2]; NUM_EFFECTORS] = [[0.2, 0.2], [0.4, 0.3], [0.4, 0.3]];
pub const ACTUATOR_STIFFNESS: f64 = 1500.0;
pub const GROUND_STIFFNESS: f64 = 2.0e4;
pub const GROUND_DAMPING: f64 = 200.0;
/// Viscous slope of the regularized Coulomb friction.
pub const FRICTION_DAMPING: f64 = 500.0;
/// Penetrations deeper than this are treated as hitting a vertical face.
const WALL_DEPTH: f64 = 0.05;

pub fn masses() -> [f64; NUM_BODIES] {
    [TORSO_MASS, EFFECTOR_MASS, EFFECTOR_MASS, EFFECTOR_MASS]
}

/// Critical damping for the torso–effector pair (reduced mass).
pub fn actuator_damping() -> f64 {
    let mu = TORSO_MASS * EFFECTOR_MASS / (TORSO_MASS + EFFECTOR_MASS);
    2.0 * (ACTUATOR_STIFFNESS * mu).sqrt()
}

/// Map a normalized action in `[-1, 1]^6` to commanded offsets.
pub fn action_to_offsets(action: &[f64]) -> [[f64; 2]; NUM_EFFECTORS] {
    let mut out = REST_OFFSETS;
    for e in 0..NUM_EFFECTORS {
        for k in 0..2 {
            out[e][k] += ACTION_SCALE[e][k] * action[2 * e + k].clamp(-1.0, 1.0);
        }
    }
    out
}

/// Inverse of [`action_to_offsets`] without clamping.
pub fn offsets_to_normalized(offsets: &[[f64; 2]; NUM_EFFECTORS]) -> [f64; ACTION_DIM] {
    let mut out = [0.0; ACTION_DIM];
    for e in 0..NUM_EFFECTORS {
        for k in 0..2 {
            out[2 * e + k] = (offsets[e][k] - REST_OFFSETS[e][k]) / ACTION_SCALE[e][k];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuppetState {
    /// World positions `(x, z)`: torso, head, left foot, right foot.
    pub pos: [[f64; 2]; NUM_BODIES],
    pub vel: [[f64; 2]; NUM_BODIES],
    pub contact: [bool; NUM_BODIES],
    /// Offsets currently commanded to the actuators.
    pub command: [[f64; 2]; NUM_EFFECTORS],
}

impl PuppetState {
    pub fn torso(&self) -> [f64; 2] {
        self.pos[TORSO]
    }

    pub fn torso_vel(&self) -> [f64; 2] {
        self.vel[TORSO]
    }

    pub fn head_height(&self) -> f64 {
        self.pos[HEAD][1]
    }

    pub fn offsets(&self) -> [[f64; 2]; NUM_EFFECTORS] {
        let t = self.pos[TORSO];
        std::array::from_fn(|e| [self.pos[e + 1][0] - t[0], self.pos[e + 1][1] - t[1]])
    }

    pub fn offset_velocities(&self) -> [[f64; 2]; NUM_EFFECTORS] {
        let t = self.vel[TORSO];
        std::array::from_fn(|e| [self.vel[e + 1][0] - t[0], self.vel[e + 1][1] - t[1]])
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(&self.vel).flatten().all(|v| v.is_finite())
    }

    /// Puppet with unloaded actuators at their rest offsets, torso at `(x, z)`.
    pub fn unloaded(x: f64, z: f64) -> Self {
        let mut pos = [[x, z]; NUM_BODIES];
        for e in 0..NUM_EFFECTORS {
            pos[e + 1] = [x + REST_OFFSETS[e][0], z + REST_OFFSETS[e][1]];
        }
        Self {
            pos,
            vel: [[0.0; 2]; NUM_BODIES],
            contact: [false; NUM_BODIES],
            command: REST_OFFSETS,
        }
    }

    /// Static equilibrium standing on flat ground at height `ground`, zero action.
    pub fn standing(x: f64, ground: f64, gravity: f64) -> Self {
        let g = gravity;
        let total = TORSO_MASS + 3.0 * EFFECTOR_MASS;
        let foot_load = total * g / 2.0;
        let foot_z = ground - foot_load / GROUND_STIFFNESS;
        // Each leg carries half of torso + head.
        let leg_force = (TORSO_MASS + EFFECTOR_MASS) * g / 2.0;
        let torso_z = foot_z - REST_OFFSETS[1][1] - leg_force / ACTUATOR_STIFFNESS;
        let head_z = torso_z + REST_OFFSETS[0][1] - EFFECTOR_MASS * g / ACTUATOR_STIFFNESS;
        let mut s = Self::unloaded(x, torso_z);
        s.pos[HEAD][1] = head_z;
        s.pos[FOOT_L][1] = foot_z;
        s.pos[FOOT_R][1] = foot_z;
        s.contact[FOOT_L] = true;
        s.contact[FOOT_R] = true;
        s
    }

    /// Kinetic + gravitational + actuator spring energy.
    pub fn energy(&self, gravity: f64) -> f64 {
        let m = masses();
        let mut e = 0.0;
        for b in 0..NUM_BODIES {
            let v = self.vel[b];
            e += 0.5 * m[b] * (v[0] * v[0] + v[1] * v[1]) + m[b] * gravity * self.pos[b][1];
        }
        let off = self.offsets();
        for k in 0..NUM_EFFECTORS {
            let dx = off[k][0] - self.command[k][0];
            let dz = off[k][1] - self.command[k][1];
            e += 0.5 * ACTUATOR_STIFFNESS * (dx * dx + dz * dz);
        }
        e
    }
}

/// Torso height of the standing equilibrium above its ground.
pub fn rest_torso_height(gravity: f64) -> f64 {
    PuppetState::standing(0.0, 0.0, gravity).pos[TORSO][1]
}

pub fn rest_head_height(gravity: f64) -> f64 {
    PuppetState::standing(0.0, 0.0, gravity).pos[HEAD][1]
}

fn contact_force(terrain: &Terrain, p: [f64; 2], v: [f64; 2], mu: f64) -> Option<[f64; 2]> {
    let seg = terrain.segment_at(p[0]);
    let h = seg.height?;
    let depth = h - p[1];
    if depth <= 0.0 {
        return None;
    }
    if depth > WALL_DEPTH {
        // Inside a step face: push out horizontally toward the nearer edge.
        let (left, right) = (p[0] - seg.x0, seg.x1 - p[0]);
        let (dist, dir) = if left < right { (left, -1.0) } else { (right, 1.0) };
        let f = GROUND_STIFFNESS * dist * dir - GROUND_DAMPING * v[0];
        return Some([f, 0.0]);
    }
    let normal = (GROUND_STIFFNESS * depth - GROUND_DAMPING * v[1]).max(0.0);
    let limit = mu * normal;
    let tangential = (-FRICTION_DAMPING * v[0]).clamp(-limit, limit);
    Some([tangential, normal])
}

/// Advance `state` by one control period `cfg.dt` with commanded offsets held.
pub fn integrate(state: &mut PuppetState, command: [[f64; 2]; NUM_EFFECTORS], terrain: &Terrain, cfg: &EnvConfig) {
    state.command = command;
    let m = masses();
    let k = ACTUATOR_STIFFNESS;
    let c = actuator_damping();
    let h = cfg.dt / cfg.substeps as f64;
    let half_g_h2 = 0.5 * cfg.gravity * h * h;
    for _ in 0..cfg.substeps {
        let mut force = [[0.0f64; 2]; NUM_BODIES];
        let t = state.pos[TORSO];
        let tv = state.vel[TORSO];
        for e in 0..NUM_EFFECTORS {
            let b = e + 1;
            for a in 0..2 {
                let stretch = t[a] + command[e][a] - state.pos[b][a];
                let rel_v = tv[a] - state.vel[b][a];
                let f = k * stretch + c * rel_v;
                force[b][a] += f;
                force[TORSO][a] -= f;
            }
        }
        for b in 0..NUM_BODIES {
            match contact_force(terrain, state.pos[b], state.vel[b], cfg.friction) {
                Some(f) => {
                    force[b][0] += f[0];
                    force[b][1] += f[1];
                    state.contact[b] = true;
                }
                None => state.contact[b] = false,
            }
        }
        for b in 0..NUM_BODIES {
            for a in 0..2 {
                let dv = h * force[b][a] / m[b];
                let v_int = state.vel[b][a] + dv;
                if a == 1 {
                    state.pos[b][a] += h * v_int - half_g_h2;
                    state.vel[b][a] = v_int - h * cfg.gravity;
                } else {
                    state.pos[b][a] += h * v_int;
                    state.vel[b][a] = v_int;
                }
            }
        }
    }
}
