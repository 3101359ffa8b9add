//! Simulated user answering guided reviews from ground truth.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricsReport};
use super::synth::{GroundTruth, GtTarget};
use crate::config::CorrectionConfig;
use crate::correction::{apply_review_answer, create_reviews, GapModel, Review, ReviewAnswer, ReviewKind, ReviewOutcome, Special};
use crate::error::Result;
use crate::marking::DerivedParams;
use crate::tracklets::{Annotation, TrackDocument};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub review_id: String,
    pub kind: ReviewKind,
    pub tracklet_id: u64,
    /// The GT target the annotator followed, if any.
    pub gt_id: Option<u64>,
    pub answer: ReviewAnswer,
    pub outcome: ReviewOutcome,
    /// Frames watched: r_start through the last keyframe.
    pub playback_frames: usize,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub initial: MetricsReport,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn annotations(&self) -> usize {
        self.entries.iter().map(|e| e.answer.annotations.len()).sum()
    }

    pub fn playback_frames(&self) -> usize {
        self.entries.iter().map(|e| e.playback_frames).sum()
    }

    pub fn final_report(&self) -> &MetricsReport {
        self.entries.last().map_or(&self.initial, |e| &e.metrics)
    }
}

/// What the simulated annotator sees and how it is scored.
pub struct SimulationContext<'a> {
    pub gt: &'a GroundTruth,
    pub gaps: &'a GapModel<'a>,
    pub params: &'a DerivedParams,
    pub cfg: &'a CorrectionConfig,
    pub match_dist: f64,
    pub window: usize,
    /// Stop after this many answers.
    pub max_answers: usize,
}

/// The answer a user following the GT target nearest to the reviewed track
/// at r_start would give.
pub fn answer_review(doc: &TrackDocument, review: &Review, gt: &GroundTruth, match_dist: f64) -> (Option<u64>, ReviewAnswer) {
    let special = |s| ReviewAnswer {
        annotations: vec![],
        special: Some(s),
    };
    let Some(start) = doc.get(review.tracklet_id).ok().and_then(|t| t.state(review.start_frame)) else {
        return (None, special(Special::RemoveTrack));
    };
    let nearest = gt
        .targets
        .iter()
        .filter_map(|g| g.state(review.start_frame).map(|s| (s.center.dist(start.center), g)))
        .filter(|(d, _)| *d <= match_dist)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    let Some((_, target)) = nearest else {
        return (None, special(Special::RemoveTrack));
    };
    (Some(target.id), follow(target, &review.keyframes))
}

fn follow(target: &GtTarget, keyframes: &[usize]) -> ReviewAnswer {
    let mut annotations = Vec::new();
    for &k in keyframes {
        match target.state(k) {
            Some(s) => annotations.push(Annotation {
                frame: k,
                center: s.center,
                orientation: s.orientation,
            }),
            None if k > target.exit() => {
                return ReviewAnswer {
                    annotations,
                    special: Some(Special::TargetExited),
                }
            }
            None => {}
        }
    }
    ReviewAnswer {
        annotations,
        special: None,
    }
}

/// Answers reviews in queue order until none are left (or the same review
/// would be served twice), recomputing metrics after every answer.
pub fn simulate_reviews(doc: &mut TrackDocument, ctx: &SimulationContext) -> Result<Transcript> {
    let mut transcript = Transcript {
        initial: evaluate(&doc.tracklets, ctx.gt, ctx.match_dist, ctx.window),
        entries: vec![],
    };
    let mut served = BTreeSet::new();
    while transcript.entries.len() < ctx.max_answers {
        let Some(review) = create_reviews(doc, ctx.cfg).into_iter().find(|r| !served.contains(&r.id)) else {
            break;
        };
        served.insert(review.id.clone());
        let (gt_id, answer) = answer_review(doc, &review, ctx.gt, ctx.match_dist);
        let report = apply_review_answer(doc, &review, &answer, ctx.gaps, ctx.params, ctx.cfg)?;
        let last_seen = review.keyframes.last().copied().unwrap_or(review.start_frame);
        transcript.entries.push(TranscriptEntry {
            review_id: review.id.clone(),
            kind: review.kind,
            tracklet_id: review.tracklet_id,
            gt_id,
            answer,
            outcome: report.outcome,
            playback_frames: last_seen + 1 - review.start_frame,
            metrics: evaluate(&doc.tracklets, ctx.gt, ctx.match_dist, ctx.window),
        });
    }
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Pose};
    use crate::harness::synth::GtState;
    use crate::matching::{DeltaStats, MotionStats, PatchShape};
    use crate::media::{Frame, InMemoryVideo};
    use crate::tracklets::{TrackState, Tracklet};

    fn gt_line(id: u64, y: f64, frames: std::ops::RangeInclusive<usize>) -> GtTarget {
        GtTarget {
            id,
            states: frames
                .map(|f| GtState {
                    frame: f,
                    center: Point::new(f as f64, y),
                    orientation: 0.0,
                    visible: true,
                })
                .collect(),
        }
    }

    fn track(id: u64, frames: std::ops::RangeInclusive<usize>, y: f64) -> Tracklet {
        Tracklet::new(
            id,
            frames
                .map(|f| {
                    let mut s = TrackState::from_pose(f, &Pose::new(Point::new(f as f64, y), 0.0, 20.0, 6.0), false);
                    s.confidence = 0.8;
                    s
                })
                .collect(),
        )
    }

    fn params() -> DerivedParams {
        DerivedParams {
            fg_threshold: 30,
            area_min: 10.0,
            area_max: 100.0,
            ratio_min: 1.0,
            ratio_max: 5.0,
            omega_cap: 4,
            land_dist: 10.0,
            theta1: 10.0,
            theta2: 10.0,
            theta3: 2,
            motion_sigma: 5.0,
            body_length: 20.0,
            body_width: 6.0,
            mean_mark_area: 120.0,
        }
    }

    fn run(doc: &mut TrackDocument, gt: &GroundTruth) -> Transcript {
        let video = InMemoryVideo::new((0..gt.frame_count).map(|_| Frame::filled(200, 200, 50)).collect()).unwrap();
        let cfg = CorrectionConfig {
            base_particles: 10,
            attempts: 1,
            ..CorrectionConfig::default()
        };
        let gaps = GapModel {
            video: &video,
            shape: PatchShape::for_body(20.0, 6.0),
            stats: DeltaStats::default(),
            motion: MotionStats::default(),
            land_dist: 1e-6,
            cfg: &cfg,
            seed: 3,
        };
        let p = params();
        let ctx = SimulationContext {
            gt,
            gaps: &gaps,
            params: &p,
            cfg: &cfg,
            match_dist: 20.0,
            window: 30,
            max_answers: 100,
        };
        simulate_reviews(doc, &ctx).unwrap()
    }

    fn gt(targets: Vec<GtTarget>) -> GroundTruth {
        GroundTruth {
            frame_count: 150,
            width: 200,
            height: 200,
            body_length: 20.0,
            body_width: 6.0,
            targets,
        }
    }

    #[test]
    fn no_reviews_no_transcript() {
        let g = gt(vec![gt_line(1, 50.0, 1..=150)]);
        let mut doc = TrackDocument::new(150, 200, 200, vec![track(1, 1..=150, 50.0)], 0.6);
        let t = run(&mut doc, &g);
        assert!(t.entries.is_empty());
        assert_eq!(t.final_report().gt_cov, 1.0);
    }

    #[test]
    fn fragments_are_repaired() {
        let g = gt(vec![gt_line(1, 50.0, 1..=150), gt_line(2, 120.0, 1..=150)]);
        let tracks = vec![
            track(1, 1..=60, 50.0),
            track(2, 70..=150, 50.0),
            track(3, 1..=100, 120.0),
            track(4, 112..=150, 120.0),
        ];
        let mut doc = TrackDocument::new(150, 200, 200, tracks, 0.6);
        let t = run(&mut doc, &g);
        assert_eq!(t.initial.fn_assoc, 2);
        let r = t.final_report();
        assert_eq!((r.fn_assoc, r.id_integ), (0, 0));
        assert_eq!(r.gt_cov, 1.0);
        assert_eq!(doc.tracklets.len(), 2);
    }

    #[test]
    fn false_positive_is_removed() {
        let g = gt(vec![gt_line(1, 50.0, 1..=150)]);
        let mut doc = TrackDocument::new(150, 200, 200, vec![track(1, 1..=150, 50.0), track(2, 20..=80, 170.0)], 0.6);
        let t = run(&mut doc, &g);
        assert_eq!(t.entries[0].outcome, ReviewOutcome::Removed);
        assert!(t.final_report().faf < t.initial.faf);
    }

    #[test]
    fn exited_target_is_flagged() {
        let g = gt(vec![gt_line(1, 50.0, 1..=100)]);
        let mut doc = TrackDocument::new(150, 200, 200, vec![track(1, 1..=95, 50.0)], 0.6);
        let t = run(&mut doc, &g);
        assert_eq!(t.entries.last().unwrap().outcome, ReviewOutcome::Exited);
        assert!(doc.get(1).unwrap().exited);
    }
}
