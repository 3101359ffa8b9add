//! Whole-video tracking: chunk planning, per-chunk stages, stitching.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::stages;
use super::Stage;
use crate::chunking::{plan_chunks, stitch, ChunkPlan, StitchTie};
use crate::config::{Config, CorrectionConfig};
use crate::correction::GapModel;
use crate::error::{Error, Result};
use crate::marking::{derive_params, DerivedParams, MarkDocument, MarkedFrame};
use crate::matching::{match_tracklets, sample_delta_stats, DeltaStats, MatchInput, MotionStats, PatchShape};
use crate::media::{ChunkView, Video};
use crate::rng::{self, label};
use crate::tracklets::{TrackDocument, Tracklet};

/// What review inference needs to fill gaps after tracking is done.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionModel {
    pub shape: PatchShape,
    pub stats: DeltaStats,
    pub motion: MotionStats,
    pub land_dist: f64,
    pub seed: u64,
}

impl CorrectionModel {
    pub fn gap_model<'a>(&self, video: &'a dyn Video, cfg: &'a CorrectionConfig) -> GapModel<'a> {
        GapModel {
            video,
            shape: self.shape,
            stats: self.stats,
            motion: self.motion,
            land_dist: self.land_dist,
            cfg,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// Index into the chunk plan.
    pub chunk: usize,
    pub stage: Stage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkSummary {
    pub range: (usize, usize),
    pub initial_tracklets: usize,
    pub tracklets: usize,
    pub joins: usize,
    pub passes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRun {
    pub plan: ChunkPlan,
    pub params: DerivedParams,
    /// T₀ of every chunk, stitched.
    pub initial: TrackDocument,
    pub document: TrackDocument,
    pub model: CorrectionModel,
    pub chunks: Vec<ChunkSummary>,
    pub stitch_ties: Vec<StitchTie>,
}

/// Marks of `[start, end]` re-indexed so that `start` becomes frame 1.
fn chunk_marks(marks: &MarkDocument, start: usize, end: usize) -> Vec<MarkedFrame> {
    let offset = start - 1;
    marks
        .frames
        .iter()
        .filter(|mf| mf.frame >= start && mf.frame <= end && !mf.marks.is_empty())
        .map(|mf| MarkedFrame {
            frame: mf.frame - offset,
            marks: mf
                .marks
                .iter()
                .map(|m| {
                    let mut m = m.clone();
                    m.frame -= offset;
                    m
                })
                .collect(),
        })
        .collect()
}

fn shifted(tracklets: Vec<Tracklet>, offset: usize) -> Vec<Tracklet> {
    tracklets
        .into_iter()
        .map(|mut t| {
            for s in t.states.iter_mut() {
                s.frame += offset;
            }
            for c in t.connections.iter_mut() {
                c.frame += offset;
            }
            for a in t.annotations.iter_mut() {
                a.frame += offset;
            }
            t
        })
        .collect()
}

struct ChunkOutput {
    initial: TrackDocument,
    matched: TrackDocument,
    summary: ChunkSummary,
}

fn run_chunk(
    video: &dyn Video,
    marked: &[MarkedFrame],
    params: &DerivedParams,
    cfg: &Config,
    seed: u64,
    report: &dyn Fn(Stage),
) -> Result<(Vec<Tracklet>, Vec<Tracklet>, usize, usize)> {
    report(Stage::Foreground);
    let seg = stages::segment(video, marked, params, cfg, rng::derive(seed, &[label::PSO]))?;
    report(Stage::Detected);
    let det = stages::detect(video, marked, &seg.masks, params, cfg, rng::derive(seed, &[label::SVM]))?;
    report(Stage::Built);
    let built = stages::build(video, &det.blobs, &det.detections, params, cfg, rng::derive(seed, &[label::FOREST]))?;
    let input = MatchInput {
        video,
        masks: &seg.masks,
        params,
        model: Some(&built.model),
        cfg,
        seed: rng::derive(seed, &[label::FORWARD]),
    };
    let out = match_tracklets(built.tracklets.clone(), &input)?;
    report(Stage::Matched);
    let joins = out.joins().count();
    Ok((built.tracklets, out.tracklets, joins, out.iterations.len()))
}

/// Runs foreground → detection → tracklets → matching on every planned
/// chunk (in parallel) and stitches the results.
pub fn track_video(
    video: &dyn Video,
    marks: &MarkDocument,
    cfg: &Config,
    seed: u64,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<TrackingRun> {
    let n = video.frame_count();
    marks.validate(video.width(), video.height(), n)?;
    if marks.total_marks() == 0 {
        return Err(Error::Stage("tracking needs user marks".into()));
    }
    let plan = plan_chunks(n, &cfg.chunking)?;
    let all = chunk_marks(marks, 1, n);
    let params = derive_params(&all, video, cfg)?;
    info!(chunks = plan.ranges.len(), ?params, "tracking");
    let (w, h) = (video.width(), video.height());
    let threshold = cfg.correction.threshold_start;

    let outputs: Vec<ChunkOutput> = plan
        .ranges
        .par_iter()
        .enumerate()
        .map(|(i, &(s, e))| {
            let view = ChunkView::new(video, s, e)?;
            let marked = chunk_marks(marks, s, e);
            if marked.is_empty() {
                return Err(Error::Stage(format!("chunk [{s}, {e}] has no marked frame")));
            }
            let chunk_params = if plan.is_single() {
                params.clone()
            } else {
                derive_params(&marked, &view, cfg)?
            };
            let report = |stage| progress(Progress { chunk: i, stage });
            let (t0, matched, joins, passes) = run_chunk(
                &view,
                &marked,
                &chunk_params,
                cfg,
                rng::derive(seed, &[label::CHUNK, i as u64]),
                &report,
            )?;
            let summary = ChunkSummary {
                range: (s, e),
                initial_tracklets: t0.len(),
                tracklets: matched.len(),
                joins,
                passes,
            };
            let doc = |ts: Vec<Tracklet>| {
                let mut d = TrackDocument::new(e - s + 1, w, h, shifted(ts, s - 1), threshold);
                d.first_frame = s;
                d
            };
            Ok(ChunkOutput {
                initial: doc(t0),
                matched: doc(matched),
                summary,
            })
        })
        .collect::<Result<_>>()?;

    let chunks = outputs.iter().map(|o| o.summary.clone()).collect();
    let (initials, matched): (Vec<_>, Vec<_>) = outputs.into_iter().map(|o| (o.initial, o.matched)).unzip();
    let (initial, _) = stitch(initials)?;
    let (document, stitch_ties) = stitch(matched)?;
    document.validate()?;

    let shape = PatchShape::for_body(params.body_length, params.body_width);
    let stats = if document.tracklets.is_empty() {
        DeltaStats::default()
    } else {
        sample_delta_stats(
            &document.tracklets,
            video,
            &shape,
            cfg.matching.templates,
            cfg.matching.delta_samples_per_tracklet,
            rng::derive(seed, &[label::DELTA]),
        )?
    };
    let model = CorrectionModel {
        shape,
        stats,
        motion: MotionStats::from_tracklets(&initial.tracklets),
        land_dist: params.land_dist,
        seed: rng::derive(seed, &[label::GAP]),
    };
    Ok(TrackingRun {
        plan,
        params,
        initial,
        document,
        model,
        chunks,
        stitch_ties,
    })
}
