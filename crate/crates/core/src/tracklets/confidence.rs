use std::f64::consts::PI;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrackletConfig;
use crate::detection::describe;
use crate::error::{Error, Result};
use crate::geometry::{axial, Point, Pose};
use crate::marking::DerivedParams;
use crate::media::{Frame, Video};
use crate::rng;

use super::forest::{subsample, ForestParams, RandomForest};
use super::track::{TrackState, Tracklet};

/// Maps a pose in a frame to a confidence in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConfidenceModel {
    Forest { forest: RandomForest, scale: f64 },
    /// Fallback when too few states exist to train a forest: detection-backed
    /// states score 1, interpolated ones 0.
    DetectionPresence,
}

impl ConfidenceModel {
    pub fn score_pose(&self, frame: &Frame, pose: &Pose) -> f64 {
        match self {
            ConfidenceModel::Forest { forest, scale } => forest.score(&describe(frame, pose, *scale)),
            ConfidenceModel::DetectionPresence => 1.0,
        }
    }

    /// Confidence of a tracklet state; with a forest, trees that trained on
    /// `group` abstain.
    pub fn score_state(&self, frame: &Frame, state: &TrackState, group: Option<u32>) -> f64 {
        match self {
            ConfidenceModel::Forest { forest, scale } => {
                let d = describe(frame, &state.pose(), *scale);
                match group {
                    Some(g) => forest.score_out_of_bag(&d, g),
                    None => forest.score(&d),
                }
            }
            ConfidenceModel::DetectionPresence => {
                if state.interpolated {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Positives are the detection-backed states of T₀; each has one negative
/// displaced by 0.5–1.5 body lengths and rotated by 30°–90°.
pub fn train_confidence(
    t0: &[Tracklet],
    video: &dyn Video,
    params: &DerivedParams,
    cfg: &TrackletConfig,
    seed: u64,
) -> Result<ConfidenceModel> {
    let mut states: Vec<(u32, TrackState)> = t0
        .iter()
        .flat_map(|t| t.states.iter().filter(|s| !s.interpolated).map(move |s| (t.id as u32, *s)))
        .collect();
    if states.len() < cfg.min_states {
        return Err(Error::TooFewStates(states.len()));
    }
    let mut r = rng::stream(seed, &[rng::label::FOREST]);
    let keep = subsample(states.len(), cfg.max_training_states, &mut r);
    states = keep.into_iter().map(|i| states[i]).collect();
    let (w, h) = (video.width() as f64, video.height() as f64);
    let scale = params.body_length;
    let samples: Vec<(u32, TrackState, Pose)> = states
        .iter()
        .map(|&(g, s)| {
            let mag = r.random_range(cfg.negative_offset.0..=cfg.negative_offset.1) * params.body_length;
            let dir = r.random_range(-PI..PI);
            let turn = r.random_range(cfg.negative_angle_deg.0..=cfg.negative_angle_deg.1).to_radians();
            let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let c = s.center + Point::new(dir.cos(), dir.sin()) * mag;
            let c = Point::new(c.x.clamp(0.0, w - 1.0), c.y.clamp(0.0, h - 1.0));
            let neg = Pose::new(c, axial(s.orientation + sign * turn), s.length, s.width);
            (g, s, neg)
        })
        .collect();
    let features: Vec<(Vec<f32>, Vec<f32>)> = samples
        .par_iter()
        .map(|(_, s, neg)| {
            let f = video.frame(s.frame)?;
            Ok((describe(&f, &s.pose(), scale), describe(&f, neg, scale)))
        })
        .collect::<Result<_>>()?;
    let mut xs = Vec::with_capacity(2 * features.len());
    let mut ys = Vec::with_capacity(2 * features.len());
    let mut groups = Vec::with_capacity(2 * features.len());
    for ((g, _, _), (p, n)) in samples.iter().zip(features) {
        xs.push(p);
        ys.push(true);
        groups.push(*g);
        xs.push(n);
        ys.push(false);
        groups.push(*g);
    }
    let forest = RandomForest::train(
        &xs,
        &ys,
        &groups,
        &ForestParams {
            trees: cfg.trees,
            max_depth: cfg.max_depth,
        },
        seed,
    );
    Ok(ConfidenceModel::Forest { forest, scale })
}

/// Scores every state (out of bag with respect to its own tracklet) and
/// stores the confidences.
pub fn score_tracklets(tracklets: &mut [Tracklet], model: &ConfidenceModel, video: &dyn Video) -> Result<()> {
    tracklets.par_iter_mut().try_for_each(|t| {
        let group = Some(t.id as u32);
        for s in t.states.iter_mut() {
            let f = video.frame(s.frame)?;
            s.confidence = model.score_state(&f, s, group);
        }
        Ok(())
    })
}

/// Drops tracklets whose mean state confidence is below the cutoff.
pub fn filter_tracks(
    mut t0: Vec<Tracklet>,
    model: &ConfidenceModel,
    video: &dyn Video,
    cfg: &TrackletConfig,
) -> Result<Vec<Tracklet>> {
    score_tracklets(&mut t0, model, video)?;
    t0.retain(|t| t.mean_confidence() >= cfg.confidence_cutoff);
    Ok(t0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_strict_below() {
        let mk = |id, c: f64| {
            let mut s = TrackState::from_pose(1, &Pose::new(Point::new(1.0, 1.0), 0.0, 4.0, 2.0), false);
            s.confidence = c;
            Tracklet::new(id, vec![s])
        };
        let keep = |c: f64| mk(1, c).mean_confidence() >= TrackletConfig::default().confidence_cutoff;
        assert!(keep(0.9));
        assert!(keep(0.5));
        assert!(!keep(0.49));
    }
}
