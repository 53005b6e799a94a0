use rand::Rng;

use crate::error::{Error, Result};

/// One stored transition, borrowed from the buffer.
#[derive(Clone, Copy, Debug)]
pub struct TransitionRef<'a> {
    pub obs: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub next_obs: &'a [f64],
    pub terminated: bool,
}

/// Ring buffer of transitions tagged with episode id and in-episode step,
/// sampled as contiguous H-step windows from a single episode.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    len: usize,
    head: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    terminated: Vec<bool>,
    episode: Vec<u64>,
    step: Vec<u32>,
    current_episode: u64,
    current_step: u32,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 || action_dim == 0 {
            return Err(Error::contract("replay buffer needs positive capacity and dims"));
        }
        Ok(Self {
            capacity,
            obs_dim,
            action_dim,
            len: 0,
            head: 0,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: Vec::new(),
            episode: Vec::new(),
            step: Vec::new(),
            current_episode: 0,
            current_step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Whether any valid `h`-step window exists (newest first).
    pub fn has_window(&self, h: usize) -> bool {
        self.len >= h && (0..=self.len - h).rev().any(|s| self.window_valid(s, h))
    }

    /// Appends a transition to the current episode. A terminal transition
    /// closes the episode.
    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], terminated: bool) -> Result<()> {
        if obs.len() != self.obs_dim || next_obs.len() != self.obs_dim || action.len() != self.action_dim {
            return Err(Error::contract("transition dims do not match buffer"));
        }
        if !reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        let slot = self.head;
        if self.len < self.capacity {
            self.obs.extend_from_slice(obs);
            self.next_obs.extend_from_slice(next_obs);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.terminated.push(terminated);
            self.episode.push(self.current_episode);
            self.step.push(self.current_step);
            self.len += 1;
        } else {
            self.obs[slot * self.obs_dim..(slot + 1) * self.obs_dim].copy_from_slice(obs);
            self.next_obs[slot * self.obs_dim..(slot + 1) * self.obs_dim].copy_from_slice(next_obs);
            self.actions[slot * self.action_dim..(slot + 1) * self.action_dim].copy_from_slice(action);
            self.rewards[slot] = reward;
            self.terminated[slot] = terminated;
            self.episode[slot] = self.current_episode;
            self.step[slot] = self.current_step;
        }
        self.head = (self.head + 1) % self.capacity;
        self.current_step += 1;
        if terminated {
            self.end_episode();
        }
        Ok(())
    }

    /// Starts a new episode (after truncation or termination).
    pub fn end_episode(&mut self) {
        if self.current_step > 0 {
            self.current_episode += 1;
            self.current_step = 0;
        }
    }

    fn physical(&self, logical: usize) -> usize {
        if self.len < self.capacity {
            logical
        } else {
            (self.head + logical) % self.capacity
        }
    }

    /// Transition at logical index `i` (0 = oldest).
    pub fn get(&self, i: usize) -> TransitionRef<'_> {
        let p = self.physical(i);
        TransitionRef {
            obs: &self.obs[p * self.obs_dim..(p + 1) * self.obs_dim],
            action: &self.actions[p * self.action_dim..(p + 1) * self.action_dim],
            reward: self.rewards[p],
            next_obs: &self.next_obs[p * self.obs_dim..(p + 1) * self.obs_dim],
            terminated: self.terminated[p],
        }
    }

    /// Whether logical indices `start..start+h` form one episode's
    /// consecutive steps with no interior terminal.
    pub fn window_valid(&self, start: usize, h: usize) -> bool {
        if h == 0 || start + h > self.len {
            return false;
        }
        let p0 = self.physical(start);
        for j in 1..h {
            let (a, b) = (self.physical(start + j - 1), self.physical(start + j));
            if self.episode[b] != self.episode[p0] || self.step[b] != self.step[a] + 1 || self.terminated[a] {
                return false;
            }
        }
        true
    }

    /// Uniformly sampled valid window start; invalid draws are rejected.
    pub fn sample_window(&self, h: usize, rng: &mut impl Rng) -> Option<usize> {
        if self.len < h {
            return None;
        }
        let starts = self.len - h + 1;
        for _ in 0..10_000 {
            let s = rng.random_range(0..starts);
            if self.window_valid(s, h) {
                return Some(s);
            }
        }
        None
    }

    pub fn window(&self, start: usize, h: usize) -> Vec<TransitionRef<'_>> {
        (start..start + h).map(|i| self.get(i)).collect()
    }
}
