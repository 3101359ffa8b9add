//! Annotation-cost model and the fixed-step manual annotation baseline.

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricsReport};
use super::synth::GroundTruth;
use crate::error::{Error, Result};
use crate::geometry::{axial_lerp, Point, Pose};
use crate::tracklets::{TrackState, Tracklet};

/// Seconds per click-and-drag annotation.
pub const SECONDS_PER_ANNOTATION: f64 = 1.5;
/// Seconds to move on to the next target or review.
pub const SECONDS_PER_SWITCH: f64 = 2.0;

/// Estimated human time in seconds.
pub fn estimate_cost(playback_seconds: f64, annotation_count: usize, switch_count: usize) -> f64 {
    playback_seconds + SECONDS_PER_ANNOTATION * annotation_count as f64 + SECONDS_PER_SWITCH * switch_count as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManualSimulation {
    pub step_size: usize,
    pub annotations: usize,
    pub tracks: Vec<Tracklet>,
    pub report: MetricsReport,
}

/// Annotates every GT target every `step_size` frames (plus its last frame)
/// and linearly interpolates in between.
pub fn simulate_manual_annotation(gt: &GroundTruth, step_size: usize, match_dist: f64, window: usize) -> Result<ManualSimulation> {
    if step_size == 0 {
        return Err(Error::Precondition("step size must be at least 1".into()));
    }
    let mut annotations = 0;
    let mut tracks = Vec::new();
    for g in gt.targets.iter().filter(|g| !g.states.is_empty()) {
        let (entry, exit) = (g.entry(), g.exit());
        let mut keys: Vec<usize> = (entry..=exit).step_by(step_size).collect();
        if keys.last() != Some(&exit) {
            keys.push(exit);
        }
        annotations += keys.len();
        let key_state = |f: usize| g.state(f).expect("contiguous GT");
        let mut states = Vec::with_capacity(exit - entry + 1);
        for w in keys.windows(2) {
            let (a, b) = (key_state(w[0]), key_state(w[1]));
            for f in w[0]..w[1] {
                let t = (f - w[0]) as f64 / (w[1] - w[0]) as f64;
                states.push(manual_state(f, a.center.lerp(b.center, t), axial_lerp(a.orientation, b.orientation, t), gt, f != w[0]));
            }
        }
        let last = key_state(exit);
        states.push(manual_state(exit, last.center, last.orientation, gt, false));
        tracks.push(Tracklet::new(g.id, states));
    }
    let report = evaluate(&tracks, gt, match_dist, window);
    Ok(ManualSimulation {
        step_size,
        annotations,
        tracks,
        report,
    })
}

fn manual_state(frame: usize, center: Point, orientation: f64, gt: &GroundTruth, interpolated: bool) -> TrackState {
    let mut s = TrackState::from_pose(frame, &Pose::new(center, orientation, gt.body_length, gt.body_width), interpolated);
    s.confidence = 1.0;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{GtState, GtTarget};

    fn gt(curve: impl Fn(usize) -> Point) -> GroundTruth {
        GroundTruth {
            frame_count: 400,
            width: 400,
            height: 400,
            body_length: 10.0,
            body_width: 3.0,
            targets: vec![GtTarget {
                id: 1,
                states: (1..=400)
                    .map(|f| GtState {
                        frame: f,
                        center: curve(f),
                        orientation: 0.0,
                        visible: true,
                    })
                    .collect(),
            }],
        }
    }

    #[test]
    fn cost_examples() {
        assert_eq!(estimate_cost(0.0, 0, 0), 0.0);
        let guided = estimate_cost(24.7 * 60.0, 1247, 131) / 60.0;
        assert!((guided - 61.0).abs() <= 1.0, "{guided}");
        let manual = estimate_cost(132.0 * 60.0, 8064, 48) / 60.0;
        assert!((manual - 336.0).abs() <= 1.0, "{manual}");
    }

    #[test]
    fn linear_motion_interpolates_exactly() {
        let g = gt(|f| Point::new(10.0 + 0.5 * f as f64, 20.0 + 0.25 * f as f64));
        for step in [1, 7, 30, 1000] {
            let m = simulate_manual_annotation(&g, step, 10.0, 30).unwrap();
            assert_eq!(m.report.gt_cov, 1.0);
            assert!(m.report.avg_pos_error < 1e-9);
        }
        assert_eq!(simulate_manual_annotation(&g, 1, 10.0, 30).unwrap().annotations, 400);
    }

    #[test]
    fn curved_motion_loses_coverage_with_step() {
        let g = gt(|f| {
            let a = f as f64 / 25.0;
            Point::new(200.0 + 120.0 * a.cos(), 200.0 + 120.0 * a.sin())
        });
        let cov: Vec<f64> = [20, 40, 80]
            .iter()
            .map(|&s| simulate_manual_annotation(&g, s, 10.0, 30).unwrap().report.gt_cov)
            .collect();
        assert!(cov[0] > cov[1] && cov[1] > cov[2], "{cov:?}");
    }
}
