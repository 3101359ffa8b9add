//! Review generation and ordering.

use serde::{Deserialize, Serialize};

use crate::config::CorrectionConfig;
use crate::tracklets::{ConnectionSource, TrackDocument, Tracklet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewKind {
    /// The tracklet ends before the last frame.
    Fragment,
    /// An association made by matching looks doubtful.
    Connection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Open,
    Answered,
    Requeued,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub kind: ReviewKind,
    pub tracklet_id: u64,
    /// r_start: where the user starts watching.
    pub start_frame: usize,
    /// The tracklet end (fragment) or the connection frame (connection).
    pub error_frame: usize,
    pub keyframes: Vec<usize>,
    /// Mean confidence around the connection; fragments carry 0.
    pub priority: f64,
    pub status: ReviewStatus,
}

/// The highest-confidence state within `lookback` frames before `error`
/// (inclusive); ties go to the later frame.
fn review_start(t: &Tracklet, error: usize, lookback: usize) -> usize {
    let lo = error.saturating_sub(lookback).max(t.start());
    let hi = error.min(t.end());
    (lo..=hi)
        .filter_map(|f| t.state(f))
        .fold(None::<(f64, usize)>, |best, s| match best {
            Some((c, _)) if c > s.confidence => best,
            _ => Some((s.confidence, s.frame)),
        })
        .map_or(error, |(_, f)| f)
}

/// Keyframes every `step` from `start` up to `error`, `error` itself, then
/// `lookahead` more at `step` spacing, clipped to `last`.
pub fn keyframes(start: usize, error: usize, step: usize, lookahead: usize, last: usize) -> Vec<usize> {
    let step = step.max(1);
    let mut k: Vec<usize> = (start..=error).step_by(step).collect();
    if k.last() != Some(&error) {
        k.push(error);
    }
    for j in 1..=lookahead {
        let f = error + j * step;
        if f > last {
            break;
        }
        k.push(f);
    }
    k
}

/// Mean state confidence of `t` within `window` frames of `frame`.
pub fn region_confidence(t: &Tracklet, frame: usize, window: usize) -> f64 {
    let states: Vec<f64> = (frame.saturating_sub(window)..=frame + window)
        .filter_map(|f| t.state(f))
        .map(|s| s.confidence)
        .collect();
    if states.is_empty() {
        return 0.0;
    }
    states.iter().sum::<f64>() / states.len() as f64
}

pub fn fragment_review_id(tracklet: u64, end: usize) -> String {
    format!("frag-{tracklet}-{end}")
}

pub fn connection_review_id(tracklet: u64, frame: usize) -> String {
    format!("conn-{tracklet}-{frame}")
}

/// Every open review of the document: fragment reviews by start frame, then
/// connection reviews below the moving threshold, most doubtful first.
pub fn create_reviews(doc: &TrackDocument, cfg: &CorrectionConfig) -> Vec<Review> {
    let last = doc.last_frame();
    let mut fragments: Vec<Review> = doc
        .tracklets
        .iter()
        .filter(|t| !t.is_empty() && t.end() < last && !t.complete && !t.exited)
        .map(|t| {
            let e = t.end();
            let start = review_start(t, e, cfg.lookback);
            Review {
                id: fragment_review_id(t.id, e),
                kind: ReviewKind::Fragment,
                tracklet_id: t.id,
                start_frame: start,
                error_frame: e,
                keyframes: keyframes(start, e, cfg.keyframe_step, cfg.lookahead_keyframes, last),
                priority: 0.0,
                status: ReviewStatus::Open,
            }
        })
        .collect();
    fragments.sort_by_key(|r| (r.start_frame, r.tracklet_id));

    let mut connections: Vec<Review> = doc
        .tracklets
        .iter()
        .flat_map(|t| {
            t.connections
                .iter()
                .filter(|c| c.source == ConnectionSource::Matching && t.covers(c.frame))
                .map(move |c| (t, c.frame))
        })
        .filter_map(|(t, f)| {
            let priority = region_confidence(t, f, cfg.connection_window);
            if priority >= doc.connection_threshold {
                return None;
            }
            let start = review_start(t, f, cfg.lookback);
            Some(Review {
                id: connection_review_id(t.id, f),
                kind: ReviewKind::Connection,
                tracklet_id: t.id,
                start_frame: start,
                error_frame: f,
                keyframes: keyframes(start, f, cfg.keyframe_step, cfg.lookahead_keyframes, last),
                priority,
                status: ReviewStatus::Open,
            })
        })
        .collect();
    connections.sort_by(|a, b| {
        a.priority
            .total_cmp(&b.priority)
            .then(a.error_frame.cmp(&b.error_frame))
            .then(a.tracklet_id.cmp(&b.tracklet_id))
    });
    fragments.extend(connections);
    fragments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Pose};
    use crate::tracklets::{Connection, TrackState};

    fn tracklet(id: u64, start: usize, end: usize, conf: impl Fn(usize) -> f64) -> Tracklet {
        Tracklet::new(
            id,
            (start..=end)
                .map(|f| {
                    let mut s = TrackState::from_pose(f, &Pose::new(Point::new(f as f64, 1.0), 0.0, 5.0, 2.0), false);
                    s.confidence = conf(f);
                    s
                })
                .collect(),
        )
    }

    #[test]
    fn full_span_tracks_need_no_review() {
        let doc = TrackDocument::new(100, 50, 50, vec![tracklet(1, 1, 100, |_| 0.9)], 0.6);
        assert!(create_reviews(&doc, &CorrectionConfig::default()).is_empty());
    }

    #[test]
    fn fragment_start_within_lookback() {
        let doc = TrackDocument::new(1000, 50, 50, vec![tracklet(1, 1, 900, |f| (f % 7) as f64 / 7.0)], 0.6);
        let r = create_reviews(&doc, &CorrectionConfig::default());
        assert_eq!(r.len(), 1);
        assert!((855..=900).contains(&r[0].start_frame));
        let k = &r[0].keyframes;
        assert_eq!(k[0], r[0].start_frame);
        assert!(k.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(&k[k.len() - 3..], &[915, 930, 945]);
    }

    #[test]
    fn moving_threshold_withholds_confident_connections() {
        let mut a = tracklet(1, 1, 200, |f| if f < 100 { 0.9 } else { 0.4 });
        a.connections = vec![
            Connection {
                frame: 50,
                joined_id: 7,
                source: ConnectionSource::Matching,
            },
            Connection {
                frame: 150,
                joined_id: 8,
                source: ConnectionSource::Matching,
            },
        ];
        let doc = TrackDocument::new(200, 50, 50, vec![a], 0.6);
        let r = create_reviews(&doc, &CorrectionConfig::default());
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].error_frame, 150);
        assert!((r[0].priority - 0.4).abs() < 1e-12);
    }

    #[test]
    fn fragments_rank_above_connections() {
        let mut a = tracklet(1, 1, 200, |_| 0.1);
        a.connections.push(Connection {
            frame: 20,
            joined_id: 9,
            source: ConnectionSource::Matching,
        });
        let b = tracklet(2, 1, 150, |_| 0.9);
        let c = tracklet(3, 1, 90, |_| 0.9);
        let doc = TrackDocument::new(200, 50, 50, vec![a, b, c], 0.6);
        let kinds: Vec<(ReviewKind, u64)> = create_reviews(&doc, &CorrectionConfig::default())
            .iter()
            .map(|r| (r.kind, r.tracklet_id))
            .collect();
        assert_eq!(
            kinds,
            vec![(ReviewKind::Fragment, 3), (ReviewKind::Fragment, 2), (ReviewKind::Connection, 1)]
        );
    }
}
