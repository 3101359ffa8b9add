//! Appearance templates and the target-level fitness.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use crate::geometry::Pose;
use crate::media::{Frame, Video};
use crate::rng;
use crate::tracklets::{TrackState, Tracklet};

/// Sampling grid of an appearance patch: `along × across` luma samples over
/// a region 1.2 body lengths by 1.2 body widths, centred on the pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchShape {
    pub along: usize,
    pub across: usize,
    pub extent_along: f64,
    pub extent_across: f64,
}

impl PatchShape {
    pub fn for_body(length: f64, width: f64) -> Self {
        let extent_along = 1.2 * length;
        let extent_across = 1.2 * width;
        PatchShape {
            along: (extent_along.round() as usize).clamp(4, 32),
            across: (extent_across.round() as usize).clamp(3, 16),
            extent_along,
            extent_across,
        }
    }

    pub fn len(&self) -> usize {
        self.along * self.across
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, frame: &Frame, pose: &Pose) -> Vec<f32> {
        let (axis, normal) = (pose.axis(), pose.normal());
        let da = self.extent_along / self.along as f64;
        let dc = self.extent_across / self.across as f64;
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.along {
            let a = (i as f64 + 0.5) * da - self.extent_along / 2.0;
            for j in 0..self.across {
                let c = (j as f64 + 0.5) * dc - self.extent_across / 2.0;
                let p = pose.center + axis * a + normal * c;
                out.push(frame.sample_luma(p.x, p.y));
            }
        }
        out
    }
}

/// Template patches of one target. Orientations are axial, so each template
/// is compared both as sampled and rotated by half a turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Templates {
    patches: Vec<Vec<f32>>,
}

fn mean_abs_diff(a: &[f32], b: impl Iterator<Item = f32>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
}

impl Templates {
    pub fn new(patches: Vec<Vec<f32>>) -> Self {
        assert!(!patches.is_empty(), "a target needs at least one template");
        Templates { patches }
    }

    /// Patches at the `k` highest-confidence states; detection-backed states
    /// are preferred over interpolated ones. Ties keep the earlier frame.
    pub fn from_tracklet(t: &Tracklet, k: usize, video: &dyn Video, shape: &PatchShape) -> Result<Self> {
        let states = template_states(t, k);
        let patches = states
            .iter()
            .map(|s| Ok(shape.sample(&*video.frame(s.frame)?, &s.pose())))
            .collect::<Result<_>>()?;
        Ok(Templates::new(patches))
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Δ: the minimum over templates of the mean absolute difference.
    pub fn delta(&self, patch: &[f32]) -> f64 {
        self.patches
            .iter()
            .map(|t| mean_abs_diff(patch, t.iter().copied()).min(mean_abs_diff(patch, t.iter().rev().copied())))
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn template_states(t: &Tracklet, k: usize) -> Vec<TrackState> {
    let mut states: Vec<&TrackState> = t.states.iter().filter(|s| !s.interpolated).collect();
    if states.is_empty() {
        states = t.states.iter().collect();
    }
    states.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.frame.cmp(&b.frame)));
    states.into_iter().take(k.max(1)).copied().collect()
}

/// Sample mean and deviation of Δ along tracklets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub mu: f64,
    pub sigma: f64,
}

/// Lower bound on `sigma`, in intensity levels.
pub const SIGMA_FLOOR: f64 = 1.0;

impl Default for DeltaStats {
    fn default() -> Self {
        DeltaStats {
            mu: 0.0,
            sigma: SIGMA_FLOOR,
        }
    }
}

impl DeltaStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return DeltaStats::default();
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n;
        DeltaStats {
            mu,
            sigma: var.sqrt().max(SIGMA_FLOOR),
        }
    }

    /// Complementary normal CDF of Δ.
    pub fn fitness(&self, delta: f64) -> f64 {
        let n = Normal::standard();
        n.sf((delta - self.mu) / self.sigma)
    }
}

/// Δ between randomly chosen states of every tracklet and that tracklet's
/// templates. States used as templates are not sampled unless nothing else
/// is available.
pub fn sample_delta_stats(
    tracklets: &[Tracklet],
    video: &dyn Video,
    shape: &PatchShape,
    templates: usize,
    per_tracklet: usize,
    seed: u64,
) -> Result<DeltaStats> {
    let mut samples = Vec::new();
    for t in tracklets {
        let chosen = template_states(t, templates);
        let tpl = Templates::new(
            chosen
                .iter()
                .map(|s| Ok(shape.sample(&*video.frame(s.frame)?, &s.pose())))
                .collect::<Result<_>>()?,
        );
        let mut pool: Vec<&TrackState> = t
            .states
            .iter()
            .filter(|s| !s.interpolated && !chosen.iter().any(|c| c.frame == s.frame))
            .collect();
        if pool.is_empty() {
            pool = t.states.iter().collect();
        }
        let mut r = rng::stream(seed, &[rng::label::DELTA, t.id]);
        for i in index::sample(&mut r, pool.len(), per_tracklet.min(pool.len())).iter() {
            let s = pool[i];
            let patch = shape.sample(&*video.frame(s.frame)?, &s.pose());
            samples.push(tpl.delta(&patch));
        }
    }
    Ok(DeltaStats::from_samples(&samples))
}

/// Fit_T: the complementary normal CDF of Δ at the hypothesised pose; zero
/// when the pose centre lies outside the frame.
pub fn fit_target(frame: &Frame, pose: &Pose, templates: &Templates, shape: &PatchShape, stats: &DeltaStats) -> f64 {
    let c = pose.center;
    if !c.is_finite() || c.x < 0.0 || c.y < 0.0 || c.x > (frame.width() - 1) as f64 || c.y > (frame.height() - 1) as f64 {
        return 0.0;
    }
    stats.fitness(templates.delta(&shape.sample(frame, pose)))
}
