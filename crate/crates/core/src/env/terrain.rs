use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{TaskConfig, TaskKind};

/// Number of height samples in a [`TerrainFeature`].
pub const FEATURE_LEN: usize = 16;
/// Look-ahead distance covered by the feature samples, metres.
pub const FEATURE_RANGE: f64 = 4.0;
/// Terrain is generated this far ahead of the start line.
const TERRAIN_LENGTH: f64 = 90.0;
/// Obstacle-free run-up in front of the start position.
const SAFE_ZONE: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    /// Ground height, `None` for a bottomless gap.
    pub height: Option<f64>,
}

/// Piecewise-constant height profile. Left of the first segment and right
/// of the last, the ground continues at the end heights.
#[derive(Clone, Debug, PartialEq)]
pub struct Terrain {
    segments: Vec<Segment>,
}

/// Height samples ahead of the torso, relative to the torso's support
/// height and clamped to `[-1, 1]` (gaps read as −1).
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainFeature(pub [f64; FEATURE_LEN]);

impl TerrainFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Terrain {
    pub fn flat() -> Self {
        Self {
            segments: vec![Segment {
                x0: -1e6,
                x1: 1e6,
                height: Some(0.0),
            }],
        }
    }

    /// No ground anywhere.
    pub fn void() -> Self {
        Self {
            segments: vec![Segment {
                x0: -1e6,
                x1: 1e6,
                height: None,
            }],
        }
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        assert!(!segments.is_empty());
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn index_at(&self, x: f64) -> usize {
        match self.segments.binary_search_by(|s| {
            if x < s.x0 {
                std::cmp::Ordering::Greater
            } else if x >= s.x1 {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Equal
            }
        }) {
            Ok(i) => i,
            Err(i) => i.min(self.segments.len() - 1),
        }
    }

    pub fn segment_at(&self, x: f64) -> &Segment {
        &self.segments[self.index_at(x)]
    }

    pub fn height_at(&self, x: f64) -> Option<f64> {
        self.segment_at(x).height
    }

    /// Ground height under `x`, or for a gap the height of the last solid
    /// ground before it.
    pub fn support_height(&self, x: f64) -> f64 {
        let i = self.index_at(x);
        self.segments[..=i]
            .iter()
            .rev()
            .find_map(|s| s.height)
            .or_else(|| self.segments[i..].iter().find_map(|s| s.height))
            .unwrap_or(0.0)
    }

    pub fn feature(&self, torso_x: f64) -> TerrainFeature {
        let base = self.support_height(torso_x);
        let mut out = [0.0; FEATURE_LEN];
        for (i, v) in out.iter_mut().enumerate() {
            let x = torso_x + FEATURE_RANGE * i as f64 / (FEATURE_LEN - 1) as f64;
            *v = match self.height_at(x) {
                Some(h) => (h - base).clamp(-1.0, 1.0),
                None => -1.0,
            };
        }
        TerrainFeature(out)
    }

    /// Lengths of all gap segments (for generator checks).
    pub fn gap_lengths(&self) -> Vec<f64> {
        self.segments
            .iter()
            .filter(|s| s.height.is_none() && s.x0 > -1e5 && s.x1 < 1e5)
            .map(|s| s.x1 - s.x0)
            .collect()
    }

    pub fn generate(task: &TaskConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Builder::new();
        let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
        match task.name {
            TaskKind::Stand | TaskKind::Walk | TaskKind::Run | TaskKind::Corridor => {
                return Self::flat();
            }
            TaskKind::Gaps => {
                let (lo, hi) = match task.gap_length {
                    Some(g) => (g, g),
                    None => (task.gap_min, task.gap_max),
                };
                while b.x < TERRAIN_LENGTH {
                    let run = uniform(rng, task.gap_spacing_min, task.gap_spacing_max);
                    b.push(run, Some(0.0));
                    let gap = uniform(rng, lo, hi);
                    if gap > 0.0 {
                        b.push(gap, None);
                    }
                }
            }
            TaskKind::Hurdles => {
                while b.x < TERRAIN_LENGTH {
                    let run = uniform(rng, task.hurdle_spacing_min, task.hurdle_spacing_max);
                    b.push(run, Some(0.0));
                    let h = uniform(rng, task.hurdle_height_min, task.hurdle_height_max);
                    b.push(task.hurdle_width, Some(h));
                }
            }
            TaskKind::Walls => {
                while b.x < TERRAIN_LENGTH {
                    let run = uniform(rng, task.wall_spacing_min, task.wall_spacing_max);
                    b.push(run, Some(0.0));
                    let h = uniform(rng, task.wall_height_min, task.wall_height_max);
                    let w = uniform(rng, task.wall_width_min, task.wall_width_max);
                    b.push(w, Some(h));
                }
            }
            TaskKind::Stairs => {
                let mut h = 0.0;
                b.push(0.5, Some(0.0));
                while b.x < TERRAIN_LENGTH {
                    h += uniform(rng, task.stair_rise_min, task.stair_rise_max);
                    let run = uniform(rng, task.stair_run_min, task.stair_run_max);
                    b.push(run, Some(h));
                }
            }
        }
        b.finish()
    }
}

struct Builder {
    segments: Vec<Segment>,
    x: f64,
}

impl Builder {
    fn new() -> Self {
        Self {
            segments: vec![Segment {
                x0: -1e6,
                x1: SAFE_ZONE,
                height: Some(0.0),
            }],
            x: SAFE_ZONE,
        }
    }

    fn push(&mut self, len: f64, height: Option<f64>) {
        let last = self.segments.last_mut().unwrap();
        if last.height == height {
            last.x1 += len;
        } else {
            self.segments.push(Segment {
                x0: self.x,
                x1: self.x + len,
                height,
            });
        }
        self.x += len;
    }

    fn finish(mut self) -> Terrain {
        let h = self.segments.iter().rev().find_map(|s| s.height).unwrap_or(0.0);
        self.push(1e6, Some(h));
        Terrain {
            segments: self.segments,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn lookup_and_support() {
        let t = Terrain::from_segments(vec![
            Segment { x0: -1e6, x1: 1.0, height: Some(0.0) },
            Segment { x0: 1.0, x1: 1.5, height: None },
            Segment { x0: 1.5, x1: 1e6, height: Some(0.2) },
        ]);
        assert_eq!(t.height_at(0.5), Some(0.0));
        assert_eq!(t.height_at(1.2), None);
        assert_eq!(t.height_at(2.0), Some(0.2));
        assert_eq!(t.support_height(1.2), 0.0);
        let f = t.feature(0.0);
        assert_eq!(f.0[0], 0.0);
        // samples at 16/15 ≈ 1.067 and 1.333 fall in the gap
        assert_eq!(f.0[4], -1.0);
        assert_eq!(f.0[5], -1.0);
        assert!((f.0[15] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gap_lengths_respect_range() {
        let task = TaskConfig::for_task(TaskKind::Gaps);
        for seed in 0..50 {
            let t = Terrain::generate(&task, &mut ChaCha8Rng::seed_from_u64(seed));
            let gaps = t.gap_lengths();
            assert!(!gaps.is_empty());
            assert!(gaps.iter().all(|&g| (0.1..=0.4).contains(&g)), "{gaps:?}");
        }
    }

    #[test]
    fn collapsed_range_gives_constant_gaps() {
        let mut task = TaskConfig::for_task(TaskKind::Gaps);
        task.gap_min = 0.25;
        task.gap_max = 0.25;
        let t = Terrain::generate(&task, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(t.gap_lengths().iter().all(|&g| (g - 0.25).abs() < 1e-9));
        task.gap_length = Some(1.2);
        let t = Terrain::generate(&task, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(t.gap_lengths().iter().all(|&g| (g - 1.2).abs() < 1e-9));
    }

    #[test]
    fn stairs_only_go_up() {
        let task = TaskConfig::for_task(TaskKind::Stairs);
        let t = Terrain::generate(&task, &mut ChaCha8Rng::seed_from_u64(1));
        let hs: Vec<f64> = t.segments().iter().map(|s| s.height.unwrap()).collect();
        assert!(hs.windows(2).all(|w| w[1] >= w[0]));
    }
}
