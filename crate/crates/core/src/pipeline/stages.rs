//! The automatic stages as in-memory functions over a [`Video`].

use rayon::prelude::*;
use tracing::{info, warn};

use crate::config::Config;
use crate::detection::{self, Blob, Classifier, Detection};
use crate::error::{Error, Result};
use crate::foreground::{self, BackgroundModel, MarkTargets, RefineParams, TuningFrame};
use crate::marking::{DerivedParams, MarkedFrame};
use crate::media::{BinaryMask, Video};
use crate::tracklets::{self, ConfidenceModel, Tracklet};

/// Output of background subtraction plus tuned refinement.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub model: BackgroundModel,
    pub refine: RefineParams,
    pub loss: f64,
    /// `masks[t - 1]` is the refined foreground of frame `t`.
    pub masks: Vec<BinaryMask>,
}

pub fn segment(video: &dyn Video, marked: &[MarkedFrame], params: &DerivedParams, cfg: &Config, seed: u64) -> Result<Segmentation> {
    let background = foreground::build_background(video, cfg.foreground.background_samples)?;
    let model = BackgroundModel {
        background,
        threshold: params.fg_threshold,
    };
    let (w, h) = (video.width(), video.height());
    let tuning: Vec<TuningFrame> = marked
        .iter()
        .map(|mf| {
            Ok(TuningFrame {
                raw: foreground::subtract(&*video.frame(mf.frame)?, &model)?,
                targets: MarkTargets::new(mf, w, h)?,
            })
        })
        .collect::<Result<_>>()?;
    let tuned = foreground::pso_tune(&tuning, params, &cfg.foreground, seed)?;
    info!(params = ?tuned.params, loss = tuned.loss, "foreground refinement tuned");
    let masks = (1..=video.frame_count())
        .into_par_iter()
        .map(|t| Ok(foreground::refine(&foreground::subtract(&*video.frame(t)?, &model)?, &tuned.params)))
        .collect::<Result<_>>()?;
    Ok(Segmentation {
        model,
        refine: tuned.params,
        loss: tuned.loss,
        masks,
    })
}

/// Blobs and accepted detections of every frame.
#[derive(Clone, Debug)]
pub struct DetectionOutput {
    pub blobs: Vec<Vec<Blob>>,
    pub classifier: Option<Classifier>,
    pub detections: Vec<Vec<Detection>>,
}

pub fn detect(
    video: &dyn Video,
    marked: &[MarkedFrame],
    masks: &[BinaryMask],
    params: &DerivedParams,
    cfg: &Config,
    seed: u64,
) -> Result<DetectionOutput> {
    let blobs: Vec<Vec<Blob>> = masks
        .par_iter()
        .enumerate()
        .map(|(i, m)| detection::extract_blobs(m, i + 1))
        .collect();
    let classifier = if detection::classifier_bypassed(params, &cfg.detection) {
        info!(area = params.mean_mark_area, "small targets; classifier bypassed");
        None
    } else {
        let marked_blobs: Vec<Vec<Blob>> = marked.iter().map(|mf| blobs[mf.frame - 1].clone()).collect();
        Some(detection::train_classifier(video, marked, &marked_blobs, params, &cfg.detection, seed)?)
    };
    let detections = detection::detect(video, &blobs, params, classifier.as_ref(), &cfg.detection)?;
    Ok(DetectionOutput {
        blobs,
        classifier,
        detections,
    })
}

#[derive(Clone, Debug)]
pub struct TrackletOutput {
    /// Before confidence filtering.
    pub unfiltered: Vec<Tracklet>,
    pub model: ConfidenceModel,
    /// T₀: scored and filtered.
    pub tracklets: Vec<Tracklet>,
}

pub fn build(
    video: &dyn Video,
    blobs: &[Vec<Blob>],
    detections: &[Vec<Detection>],
    params: &DerivedParams,
    cfg: &Config,
    seed: u64,
) -> Result<TrackletOutput> {
    let graph = tracklets::build_tunnels(blobs, video.width(), video.height());
    let lanes = tracklets::partition_lanes(&graph);
    let outcome = tracklets::build_tracklets(&graph, &lanes, blobs, detections, video.width());
    info!(lanes = lanes.len(), tracklets = outcome.tracklets.len(), "tracklets built");
    let model = match tracklets::train_confidence(&outcome.tracklets, video, params, &cfg.tracklets, seed) {
        Ok(m) => m,
        Err(Error::TooFewStates(n)) => {
            warn!(states = n, "too few states for the confidence forest; scoring by detection presence");
            ConfidenceModel::DetectionPresence
        }
        Err(e) => return Err(e),
    };
    let unfiltered = outcome.tracklets.clone();
    let kept = tracklets::filter_tracks(outcome.tracklets, &model, video, &cfg.tracklets)?;
    info!(kept = kept.len(), "tracklets filtered");
    Ok(TrackletOutput {
        unfiltered,
        model,
        tracklets: kept,
    })
}
