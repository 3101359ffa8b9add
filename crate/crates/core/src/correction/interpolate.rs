//! Gap filling by forward/backward particle-filter agreement.

use rand::Rng as _;

use crate::config::CorrectionConfig;
use crate::error::Result;
use crate::geometry::{axial_lerp, axial_mean, Point, Pose};
use crate::matching::{fit_target, DeltaStats, MotionStats, PatchShape, Templates};
use crate::media::Video;
use crate::rng::{self, label, Rng};
use crate::tracklets::TrackState;

/// Inputs shared by every gap interpolation of a project.
pub struct GapModel<'a> {
    pub video: &'a dyn Video,
    pub shape: PatchShape,
    pub stats: DeltaStats,
    pub motion: MotionStats,
    pub land_dist: f64,
    pub cfg: &'a CorrectionConfig,
    pub seed: u64,
}

/// How a gap was filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapFill {
    Empty,
    /// Both filters landed on the attempt with this index (1-based).
    Blended(u32),
    Linear,
}

/// States for the open interval between `a` and `b`, all flagged as
/// interpolated with zero confidence.
pub fn interpolate_gap(a: &TrackState, b: &TrackState, model: &GapModel) -> Result<Vec<TrackState>> {
    Ok(interpolate_gap_with(a, b, model)?.0)
}

pub fn interpolate_gap_with(a: &TrackState, b: &TrackState, model: &GapModel) -> Result<(Vec<TrackState>, GapFill)> {
    assert!(a.frame < b.frame, "gap anchors out of order");
    if b.frame == a.frame + 1 {
        return Ok((Vec::new(), GapFill::Empty));
    }
    let templates = Templates::new(vec![
        model.shape.sample(&*model.video.frame(a.frame)?, &a.pose()),
        model.shape.sample(&*model.video.frame(b.frame)?, &b.pose()),
    ]);
    for attempt in 1..=model.cfg.attempts {
        let particles = model.cfg.base_particles << (attempt - 1);
        let mut rf = rng::stream(model.seed, &[label::GAP, a.frame as u64, b.frame as u64, attempt as u64, 0]);
        let mut rb = rng::stream(model.seed, &[label::GAP, a.frame as u64, b.frame as u64, attempt as u64, 1]);
        let forward = run_filter(&a.pose(), (a.frame + 1..=b.frame).collect(), &templates, model, particles, &mut rf)?;
        let backward = run_filter(&b.pose(), (a.frame..b.frame).rev().collect(), &templates, model, particles, &mut rb)?;
        let fwd_lands = forward.last().expect("non-empty").center.dist(b.center) <= model.land_dist;
        let bwd_lands = backward.last().expect("non-empty").center.dist(a.center) <= model.land_dist;
        if fwd_lands && bwd_lands {
            let span = (b.frame - a.frame) as f64;
            let states = (a.frame + 1..b.frame)
                .map(|t| {
                    let f = &forward[t - a.frame - 1];
                    let k = &backward[b.frame - 1 - t];
                    let w = (b.frame - t) as f64 / span;
                    let s = 1.0 - (b.frame - t) as f64 / span;
                    let anchor = a.pose().lerp(&b.pose(), s);
                    let pose = Pose::new(
                        f.center * w + k.center * (1.0 - w),
                        axial_lerp(k.orientation, f.orientation, w),
                        anchor.length,
                        anchor.width,
                    );
                    gap_state(t, &pose)
                })
                .collect();
            return Ok((states, GapFill::Blended(attempt)));
        }
    }
    Ok((linear_gap(a, b), GapFill::Linear))
}

/// Straight-line interpolation over the open interval.
pub fn linear_gap(a: &TrackState, b: &TrackState) -> Vec<TrackState> {
    let span = (b.frame - a.frame) as f64;
    (a.frame + 1..b.frame)
        .map(|t| gap_state(t, &a.pose().lerp(&b.pose(), (t - a.frame) as f64 / span)))
        .collect()
}

fn gap_state(frame: usize, pose: &Pose) -> TrackState {
    let mut s = TrackState::from_pose(frame, pose, true);
    s.confidence = 0.0;
    s
}

/// Bootstrap filter from `start` over `frames`; one weighted-mean estimate
/// per frame.
fn run_filter(
    start: &Pose,
    frames: Vec<usize>,
    templates: &Templates,
    model: &GapModel,
    count: usize,
    r: &mut Rng,
) -> Result<Vec<Pose>> {
    let mut particles = vec![*start; count];
    let mut estimates = Vec::with_capacity(frames.len());
    for t in frames {
        let frame = model.video.frame(t)?;
        for p in particles.iter_mut() {
            *p = model.motion.perturb(p, r);
        }
        let mut weights: Vec<f64> = particles
            .iter()
            .map(|p| fit_target(&frame, p, templates, &model.shape, &model.stats))
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights.iter_mut().for_each(|w| *w = 1.0 / count as f64);
        }
        let mut c = Point::new(0.0, 0.0);
        for (p, w) in particles.iter().zip(&weights) {
            c = c + p.center * *w;
        }
        let theta = axial_mean(particles.iter().zip(&weights).map(|(p, w)| (*w, p.orientation)));
        estimates.push(Pose::new(c, theta, start.length, start.width));
        particles = systematic_resample(&particles, &weights, r);
    }
    Ok(estimates)
}

fn systematic_resample(particles: &[Pose], weights: &[f64], r: &mut Rng) -> Vec<Pose> {
    let n = particles.len();
    let step = 1.0 / n as f64;
    let mut u = r.random_range(0.0..step);
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for _ in 0..n {
        while u > cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(particles[i]);
        u += step;
    }
    out
}
