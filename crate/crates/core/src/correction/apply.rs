//! Inference on review answers.

use serde::{Deserialize, Serialize};
use tracing::debug;

use super::interpolate::{interpolate_gap, GapModel};
use super::manual::{split_tracklet, user_state};
use super::review::{Review, ReviewKind};
use crate::config::CorrectionConfig;
use crate::error::{Error, Result};
use crate::geometry::{axial_lerp, Point, Pose};
use crate::marking::DerivedParams;
use crate::matching::concatenate;
use crate::tracklets::{Annotation, ConnectionSource, TrackDocument, Tracklet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Special {
    TargetExited,
    RemoveTrack,
}

/// A user's answer to one review: keyframe poses, a special verdict, or
/// both when the target was followed until it left the scene.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewAnswer {
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub special: Option<Special>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ReviewOutcome {
    Joined { to_id: u64 },
    Requeued,
    Exited,
    Removed,
    Standalone,
}

/// Everything [`apply_review_answer`] reports besides the outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerReport {
    pub outcome: ReviewOutcome,
    /// Tracklets split off by broken connections.
    pub broken: Vec<u64>,
    /// Engulfed tracklets that were deleted.
    pub engulfed: Vec<u64>,
}

/// Join candidate scores against the annotation set K*.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub id: u64,
    pub mean_distance: f64,
    pub overlap: usize,
}

/// Ranks tracklets other than `reviewed` by mean distance to the members of
/// `k_star` falling inside their span.
pub fn rank_candidates(doc: &TrackDocument, reviewed: u64, k_star: &[Annotation]) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = doc
        .tracklets
        .iter()
        .filter(|t| t.id != reviewed)
        .filter_map(|t| {
            let d: Vec<f64> = k_star
                .iter()
                .filter_map(|a| t.state(a.frame).map(|s| s.center.dist(a.center)))
                .collect();
            (!d.is_empty()).then(|| Candidate {
                id: t.id,
                mean_distance: d.iter().sum::<f64>() / d.len() as f64,
                overlap: d.len(),
            })
        })
        .collect();
    out.sort_by(|a, b| a.mean_distance.total_cmp(&b.mean_distance).then(a.id.cmp(&b.id)));
    out
}

/// Which of the four join checks a candidate passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JoinChecks {
    pub distance: bool,
    pub margin: bool,
    pub overlap: bool,
    pub no_overshoot: bool,
}

impl JoinChecks {
    pub fn all(&self) -> bool {
        self.distance && self.margin && self.overlap && self.no_overshoot
    }
}

pub fn join_checks(ranked: &[Candidate], k_star: &[Annotation], candidate_end: usize, params: &DerivedParams) -> Option<JoinChecks> {
    let best = ranked.first()?;
    let margin = ranked.get(1).map_or(f64::INFINITY, |s| s.mean_distance - best.mean_distance);
    let last_annotation = k_star.iter().map(|a| a.frame).max().unwrap_or(0);
    Some(JoinChecks {
        distance: best.mean_distance < params.theta1,
        margin: margin > params.theta2,
        overlap: best.overlap > params.theta3,
        no_overshoot: last_annotation <= candidate_end,
    })
}

/// Piecewise-linear path through the annotations (sorted by frame).
fn annotation_path(k_star: &[Annotation], frame: usize) -> Point {
    let i = k_star.partition_point(|a| a.frame < frame);
    if i < k_star.len() && k_star[i].frame == frame {
        return k_star[i].center;
    }
    if i == 0 {
        return k_star[0].center;
    }
    if i == k_star.len() {
        return k_star[k_star.len() - 1].center;
    }
    let (a, b) = (&k_star[i - 1], &k_star[i]);
    a.center.lerp(b.center, (frame - a.frame) as f64 / (b.frame - a.frame) as f64)
}

fn validate_answer(doc: &TrackDocument, review: &Review, answer: &ReviewAnswer) -> Result<()> {
    if answer.special.is_some() {
        return Ok(());
    }
    if answer.annotations.is_empty() {
        return Err(Error::InvalidOperation(format!("review {} answered without annotations", review.id)));
    }
    for a in &answer.annotations {
        let inside = a.center.is_finite()
            && a.center.x >= 0.0
            && a.center.y >= 0.0
            && a.center.x < doc.width as f64
            && a.center.y < doc.height as f64;
        if !inside || a.frame < doc.first_frame || a.frame > doc.last_frame() || !a.orientation.is_finite() {
            return Err(Error::InvalidOperation(format!(
                "annotation at frame {} ({:.1}, {:.1}) lies outside the video",
                a.frame, a.center.x, a.center.y
            )));
        }
    }
    Ok(())
}

/// Applies one answer: specials, connection breaking, annotation writing
/// with gap filling, the conservative join and engulfed-track removal.
/// An exit verdict with annotations is applied after them and flags the
/// resulting tracklet.
pub fn apply_review_answer(
    doc: &mut TrackDocument,
    review: &Review,
    answer: &ReviewAnswer,
    gaps: &GapModel,
    params: &DerivedParams,
    cfg: &CorrectionConfig,
) -> Result<AnswerReport> {
    let id = review.tracklet_id;
    doc.get(id)?;
    validate_answer(doc, review, answer)?;
    match answer.special {
        Some(Special::RemoveTrack) => {
            doc.remove(id)?;
            return Ok(AnswerReport {
                outcome: ReviewOutcome::Removed,
                broken: vec![],
                engulfed: vec![],
            });
        }
        Some(Special::TargetExited) if answer.annotations.is_empty() => {
            doc.get_mut(id)?.exited = true;
            return Ok(AnswerReport {
                outcome: ReviewOutcome::Exited,
                broken: vec![],
                engulfed: vec![],
            });
        }
        _ => {}
    }
    let mut current = answer.annotations.clone();
    current.sort_by_key(|a| a.frame);
    current.dedup_by_key(|a| a.frame);
    let (min_k, max_k) = (current[0].frame, current[current.len() - 1].frame);

    // break every connection inside the annotated span
    let mut broken = Vec::new();
    loop {
        let t = doc.get(id)?;
        let Some(c) = t
            .connections
            .iter()
            .filter(|c| c.frame >= min_k && c.frame <= max_k && c.frame > t.start() && c.frame <= t.end())
            .map(|c| c.frame)
            .max()
        else {
            break;
        };
        broken.push(split_tracklet(doc, id, c)?);
    }
    if !broken.is_empty() && review.kind == ReviewKind::Fragment {
        doc.connection_threshold = (doc.connection_threshold + cfg.threshold_step).min(1.0);
    }

    write_annotations(doc.get_mut(id)?, &current, gaps)?;
    let t = doc.get_mut(id)?;
    t.annotations.extend(current.iter().copied());
    t.annotations.sort_by_key(|a| a.frame);
    t.annotations.dedup_by_key(|a| a.frame);
    let k_star = t.annotations.clone();
    let reviewed_start = t.start();

    let ranked = rank_candidates(doc, id, &k_star);
    let mut outcome = None;
    if let Some(best) = ranked.first().copied() {
        let cand = doc.get(best.id)?;
        let checks = join_checks(&ranked, &k_star, cand.end(), params).expect("non-empty ranking");
        debug!(review = %review.id, candidate = best.id, ?checks, distance = best.mean_distance, "join checks");
        if checks.all() && cand.start() > reviewed_start {
            let later = doc.remove(best.id)?;
            let t = doc.get_mut(id)?;
            t.states.retain(|s| s.frame < later.start());
            let last = t.states[t.states.len() - 1];
            let gap = interpolate_gap(&last, &later.states[0], gaps)?;
            let to = later.id;
            concatenate(t, later, gap, ConnectionSource::Review);
            outcome = Some(ReviewOutcome::Joined { to_id: to });
        }
    }
    let exited = answer.special == Some(Special::TargetExited);
    if exited {
        doc.get_mut(id)?.exited = true;
    }
    let outcome = outcome.unwrap_or(if exited {
        ReviewOutcome::Exited
    } else if max_k >= doc.last_frame() {
        ReviewOutcome::Standalone
    } else {
        ReviewOutcome::Requeued
    });

    let joined = match outcome {
        ReviewOutcome::Joined { to_id } => Some(to_id),
        _ => None,
    };
    let (lo, hi) = (k_star[0].frame, k_star[k_star.len() - 1].frame);
    let engulfed: Vec<u64> = doc
        .tracklets
        .iter()
        .filter(|t| t.id != id && Some(t.id) != joined && t.start() >= lo && t.end() <= hi)
        .filter(|t| {
            let d: f64 = t.states.iter().map(|s| s.center.dist(annotation_path(&k_star, s.frame))).sum();
            d / t.states.len() as f64 <= 2.0 * params.theta1 - f64::EPSILON
        })
        .map(|t| t.id)
        .collect();
    for e in &engulfed {
        doc.remove(*e)?;
    }
    Ok(AnswerReport {
        outcome,
        broken,
        engulfed,
    })
}

/// Writes annotation poses into `t`, extending it where annotations fall
/// outside its span; frames left without a state are filled by
/// [`interpolate_gap`].
fn write_annotations(t: &mut Tracklet, annotations: &[Annotation], gaps: &GapModel) -> Result<()> {
    let (length, width) = {
        let s = &t.states[t.states.len() / 2];
        (s.length, s.width)
    };
    let pose_of = |a: &Annotation| Pose::new(a.center, crate::geometry::axial(a.orientation), length, width);
    for a in annotations {
        if let Some(s) = t.state_mut(a.frame) {
            let pose = Pose::new(a.center, crate::geometry::axial(a.orientation), s.length, s.width);
            *s = user_state(a.frame, &pose);
        }
    }
    let after: Vec<&Annotation> = annotations.iter().filter(|a| a.frame > t.end()).collect();
    for a in after {
        let last = t.states[t.states.len() - 1];
        let next = user_state(a.frame, &pose_of(a));
        let gap = interpolate_gap(&last, &next, gaps)?;
        t.states.extend(gap);
        t.states.push(next);
    }
    let before: Vec<&Annotation> = annotations.iter().filter(|a| a.frame < t.start()).rev().collect();
    for a in before {
        let first = t.states[0];
        let prev = user_state(a.frame, &pose_of(a));
        let mut head = vec![prev];
        head.extend(interpolate_gap(&prev, &first, gaps)?);
        head.append(&mut t.states);
        t.states = head;
    }
    Ok(())
}

/// Piecewise-linear state at `frame` between two annotations; used by the
/// simulated annotator to score candidate paths.
pub fn lerp_annotation(a: &Annotation, b: &Annotation, frame: usize) -> Annotation {
    let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
    Annotation {
        frame,
        center: a.center.lerp(b.center, t),
        orientation: axial_lerp(a.orientation, b.orientation, t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::review::{create_reviews, ReviewStatus};
    use crate::matching::{DeltaStats, MotionStats, PatchShape};
    use crate::media::{Frame, InMemoryVideo};
    use crate::tracklets::{Connection, TrackState};

    fn params() -> DerivedParams {
        DerivedParams {
            fg_threshold: 30,
            area_min: 10.0,
            area_max: 100.0,
            ratio_min: 1.0,
            ratio_max: 5.0,
            omega_cap: 4,
            land_dist: 10.0,
            theta1: 20.0,
            theta2: 20.0,
            theta3: 2,
            motion_sigma: 5.0,
            body_length: 40.0,
            body_width: 8.0,
            mean_mark_area: 300.0,
        }
    }

    fn line(id: u64, start: usize, end: usize, y: f64) -> Tracklet {
        Tracklet::new(
            id,
            (start..=end)
                .map(|f| {
                    let mut s = TrackState::from_pose(f, &Pose::new(Point::new(f as f64, y), 0.0, 40.0, 8.0), false);
                    s.confidence = 0.8;
                    s
                })
                .collect(),
        )
    }

    fn annotate(frames: &[usize], y: f64) -> ReviewAnswer {
        ReviewAnswer {
            annotations: frames
                .iter()
                .map(|&f| Annotation {
                    frame: f,
                    center: Point::new(f as f64 + 3.0, y),
                    orientation: 0.0,
                })
                .collect(),
            special: None,
        }
    }

    struct Fixture {
        video: InMemoryVideo,
        cfg: CorrectionConfig,
    }

    impl Fixture {
        fn new() -> Self {
            Fixture {
                video: InMemoryVideo::new((0..200).map(|_| Frame::filled(300, 200, 50)).collect()).unwrap(),
                cfg: CorrectionConfig {
                    base_particles: 10,
                    attempts: 1,
                    ..CorrectionConfig::default()
                },
            }
        }

        fn gaps(&self) -> GapModel<'_> {
            GapModel {
                video: &self.video,
                shape: PatchShape::for_body(40.0, 8.0),
                stats: DeltaStats::default(),
                motion: MotionStats::default(),
                land_dist: 1e-6,
                cfg: &self.cfg,
                seed: 1,
            }
        }
    }

    fn review(doc: &TrackDocument) -> Review {
        create_reviews(doc, &CorrectionConfig::default())
            .into_iter()
            .find(|r| r.tracklet_id == 1)
            .unwrap()
    }

    #[test]
    fn passing_all_checks_joins() {
        let fx = Fixture::new();
        let mut doc = TrackDocument::new(
            200,
            300,
            200,
            vec![line(1, 1, 60, 50.0), line(2, 66, 200, 50.0), line(3, 66, 200, 150.0)],
            0.6,
        );
        let r = review(&doc);
        assert_eq!(r.keyframes[r.keyframes.len() - 3..], [75, 90, 105]);
        let ans = annotate(&r.keyframes, 50.0);
        let rep = apply_review_answer(&mut doc, &r, &ans, &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert_eq!(rep.outcome, ReviewOutcome::Joined { to_id: 2 });
        let t = doc.get(1).unwrap();
        assert_eq!((t.start(), t.end()), (1, 200));
        t.validate().unwrap();
        assert_eq!(t.connections.last().unwrap().source, ConnectionSource::Review);
        assert_eq!(r.status, ReviewStatus::Open);
    }

    #[test]
    fn each_failed_check_blocks_the_join() {
        let fx = Fixture::new();
        let base = |other_y: f64| {
            let a = line(1, 1, 60, 50.0);
            TrackDocument::new(200, 300, 200, vec![a, line(2, 66, 200, 50.0), line(3, 66, 200, other_y)], 0.6)
        };
        // distance: annotations far from every tracklet
        let mut doc = base(150.0);
        let r = review(&doc);
        let rep = apply_review_answer(&mut doc, &r, &annotate(&r.keyframes, 100.0), &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert_eq!(rep.outcome, ReviewOutcome::Requeued);
        // margin: a second tracklet almost as close
        let mut doc = base(60.0);
        let r = review(&doc);
        let rep = apply_review_answer(&mut doc, &r, &annotate(&r.keyframes, 50.0), &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert_eq!(rep.outcome, ReviewOutcome::Requeued);
        // overlap: only two annotated keyframes inside the candidate
        let mut doc = base(150.0);
        let r = review(&doc);
        let frames: Vec<usize> = r.keyframes[..r.keyframes.len() - 1].to_vec();
        let rep = apply_review_answer(&mut doc, &r, &annotate(&frames, 50.0), &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert_eq!(rep.outcome, ReviewOutcome::Requeued);
        // overshoot: candidate ends before the last annotation
        let a = line(1, 1, 60, 50.0);
        let mut doc = TrackDocument::new(200, 300, 200, vec![a, line(2, 66, 100, 50.0)], 0.6);
        let r = review(&doc);
        let rep = apply_review_answer(&mut doc, &r, &annotate(&r.keyframes, 50.0), &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert_eq!(rep.outcome, ReviewOutcome::Requeued);
    }

    #[test]
    fn annotations_across_a_connection_break_it() {
        let fx = Fixture::new();
        let mut a = line(1, 1, 120, 50.0);
        a.connections.push(Connection {
            frame: 70,
            joined_id: 5,
            source: ConnectionSource::Matching,
        });
        for s in a.states.iter_mut().filter(|s| s.frame >= 70) {
            s.center.y = 150.0;
            s.confidence = 0.1;
        }
        let mut doc = TrackDocument::new(200, 300, 200, vec![a, line(2, 70, 200, 50.0)], 0.6);
        let r = create_reviews(&doc, &CorrectionConfig::default())
            .into_iter()
            .find(|r| r.kind == ReviewKind::Connection)
            .unwrap();
        let rep = apply_review_answer(&mut doc, &r, &annotate(&r.keyframes, 50.0), &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert_eq!(rep.broken.len(), 1);
        assert_eq!(rep.outcome, ReviewOutcome::Joined { to_id: 2 });
        assert!(doc.get(1).unwrap().state(100).unwrap().center.y < 60.0);
        assert!(doc.get(rep.broken[0]).unwrap().state(100).unwrap().center.y > 140.0);
    }

    #[test]
    fn specials_short_circuit() {
        let fx = Fixture::new();
        let mut doc = TrackDocument::new(200, 300, 200, vec![line(1, 1, 60, 50.0)], 0.6);
        let r = review(&doc);
        let exited = ReviewAnswer {
            annotations: vec![],
            special: Some(Special::TargetExited),
        };
        assert_eq!(
            apply_review_answer(&mut doc, &r, &exited, &fx.gaps(), &params(), &fx.cfg).unwrap().outcome,
            ReviewOutcome::Exited
        );
        assert!(create_reviews(&doc, &CorrectionConfig::default()).is_empty());
        let remove = ReviewAnswer {
            annotations: vec![],
            special: Some(Special::RemoveTrack),
        };
        apply_review_answer(&mut doc, &r, &remove, &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert!(doc.tracklets.is_empty());
    }

    #[test]
    fn engulfed_fragment_is_removed() {
        let fx = Fixture::new();
        let a = line(1, 1, 60, 50.0);
        let doc0 = TrackDocument::new(200, 300, 200, vec![a, line(2, 66, 80, 52.0), line(3, 66, 80, 150.0)], 0.6);
        let mut doc = doc0.clone();
        let r = review(&doc);
        let rep = apply_review_answer(&mut doc, &r, &annotate(&r.keyframes, 50.0), &fx.gaps(), &params(), &fx.cfg).unwrap();
        assert_eq!(rep.engulfed, vec![2]);
        assert!(doc.get(3).is_ok());
    }

    #[test]
    fn annotation_outside_frame_is_rejected() {
        let fx = Fixture::new();
        let mut doc = TrackDocument::new(200, 300, 200, vec![line(1, 1, 60, 50.0)], 0.6);
        let r = review(&doc);
        let bad = annotate(&r.keyframes, 500.0);
        assert!(apply_review_answer(&mut doc, &r, &bad, &fx.gaps(), &params(), &fx.cfg).is_err());
    }
}
