//! Foreground estimation: a median background, thresholded differences and a
//! morphological refinement whose parameters are tuned against the marks.

mod morphology;
mod pso;

pub use morphology::{
    close, dilate, erode, label_components, majority, refine, remove_small, squared_distance, Components,
    RefineParams,
};
pub use pso::{minimize, PsoResult};

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ForegroundConfig;
use crate::error::{Error, Result};
use crate::marking::{rasterize_mark, DerivedParams, MarkedFrame};
use crate::media::{BinaryMask, Frame, Video};

/// Per-pixel background luma.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Background {
    pub width: u32,
    pub height: u32,
    pub luma: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub background: Background,
    pub threshold: u8,
}

/// Evenly spaced frame indices, first and last included, without repeats.
pub fn sample_frames(frame_count: usize, samples: usize) -> Vec<usize> {
    if samples >= frame_count {
        return (1..=frame_count).collect();
    }
    let mut out: Vec<usize> = (0..samples)
        .map(|i| 1 + ((i * (frame_count - 1)) as f64 / (samples - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Per-pixel temporal median over `sample_count` evenly spaced frames (the
/// lower median when the sample count is even).
pub fn build_background(video: &dyn Video, sample_count: usize) -> Result<Background> {
    if sample_count < 3 {
        return Err(Error::Precondition(format!("background needs ≥3 samples, got {sample_count}")));
    }
    let frames = sample_frames(video.frame_count(), sample_count);
    let lumas: Vec<Vec<u8>> = frames
        .iter()
        .map(|&t| video.frame(t).map(|f| f.luma()))
        .collect::<Result<_>>()?;
    let (w, h) = (video.width(), video.height());
    let n = lumas.len();
    let luma = (0..(w * h) as usize)
        .into_par_iter()
        .with_min_len(4096)
        .map_init(
            || Vec::with_capacity(n),
            |buf, i| {
                buf.clear();
                buf.extend(lumas.iter().map(|l| l[i]));
                buf.sort_unstable();
                buf[(n - 1) / 2]
            },
        )
        .collect();
    Ok(Background { width: w, height: h, luma })
}

fn check_dims(frame: &Frame, bg: &Background) -> Result<()> {
    if (frame.width(), frame.height()) != (bg.width, bg.height) {
        return Err(Error::DimensionMismatch {
            frame: 0,
            got: (frame.width(), frame.height()),
            expected: (bg.width, bg.height),
        });
    }
    Ok(())
}

/// Pixels whose luma differs from the background by more than the threshold.
pub fn subtract(frame: &Frame, model: &BackgroundModel) -> Result<BinaryMask> {
    check_dims(frame, &model.background)?;
    let luma = frame.luma();
    let bits = luma
        .iter()
        .zip(&model.background.luma)
        .map(|(&a, &b)| a.abs_diff(b) > model.threshold)
        .collect();
    Ok(BinaryMask::from_bits(frame.width(), frame.height(), bits))
}

/// Union of the rasterized marks of one marked frame.
pub fn mark_union(mf: &MarkedFrame, width: u32, height: u32) -> Result<BinaryMask> {
    let mut union = BinaryMask::new(width, height);
    for m in &mf.marks {
        union.union_with(&rasterize_mark(m, width, height)?.mask);
    }
    Ok(union)
}

/// The threshold in [1, 255] maximising F1 between the subtraction mask and
/// the union of marks over all marked frames; ties go to the larger value.
pub fn tune_threshold(marked_frames: &[MarkedFrame], video: &dyn Video, background: &Background) -> Result<u8> {
    if marked_frames.iter().all(|f| f.marks.is_empty()) {
        return Err(Error::Precondition("threshold tuning needs at least one mark".into()));
    }
    // hist[d] counts pixels with |luma - background| == d, split by mark membership
    let mut inside = [0u64; 256];
    let mut outside = [0u64; 256];
    for mf in marked_frames {
        let frame = video.frame(mf.frame)?;
        check_dims(&frame, background)?;
        let union = mark_union(mf, video.width(), video.height())?;
        for ((&a, &b), &m) in frame.luma().iter().zip(&background.luma).zip(union.bits()) {
            let d = a.abs_diff(b) as usize;
            if m {
                inside[d] += 1;
            } else {
                outside[d] += 1;
            }
        }
    }
    Ok(best_f1_threshold(&inside, &outside))
}

/// Exhaustive F1 scan given difference histograms; prediction is `d > t`.
pub fn best_f1_threshold(inside: &[u64; 256], outside: &[u64; 256]) -> u8 {
    let total_in: u64 = inside.iter().sum();
    let mut best_t = 1u8;
    let mut best = (0u128, 1u128);
    for t in 1..=255usize {
        let tp: u64 = inside[t + 1..].iter().sum();
        let fp: u64 = outside[t + 1..].iter().sum();
        let fn_ = total_in - tp;
        let num = 2 * tp as u128;
        let den = (2 * tp + fp + fn_).max(1) as u128;
        // num/den >= best.0/best.1, compared exactly
        if num * best.1 >= best.0 * den {
            best = (num, den);
            best_t = t as u8;
        }
    }
    best_t
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FgLossBreakdown {
    pub correct: usize,
    pub over_seg: usize,
    /// Component-side under-segmentation plus `missed`.
    pub under_seg: usize,
    pub incorrect: usize,
    /// Mark pixels covered by no component (included in `under_seg`).
    pub missed: usize,
    pub loss: f64,
}

/// Mark geometry of one marked frame prepared for repeated loss evaluation.
#[derive(Clone, Debug)]
pub struct MarkTargets {
    pub union: BinaryMask,
    /// Pixel indices of each individual mark.
    pub marks: Vec<Vec<usize>>,
}

impl MarkTargets {
    pub fn new(mf: &MarkedFrame, width: u32, height: u32) -> Result<Self> {
        let mut union = BinaryMask::new(width, height);
        let mut marks = Vec::with_capacity(mf.marks.len());
        for m in &mf.marks {
            let r = rasterize_mark(m, width, height)?;
            marks.push(r.mask.ones().collect());
            union.union_with(&r.mask);
        }
        Ok(MarkTargets { union, marks })
    }

    pub fn from_masks(masks: &[BinaryMask]) -> Self {
        let (w, h) = masks.first().map(|m| m.dims()).unwrap_or((0, 0));
        let mut union = BinaryMask::new(w, h);
        for m in masks {
            union.union_with(m);
        }
        MarkTargets {
            union,
            marks: masks.iter().map(|m| m.ones().collect()).collect(),
        }
    }
}

pub fn fg_loss(refined: &BinaryMask, targets: &MarkTargets, cfg: &ForegroundConfig) -> FgLossBreakdown {
    let comps = label_components(refined);
    let n = comps.len();
    // marks touching each component: 0, the single mark index + 1, or MANY
    const MANY: usize = usize::MAX;
    let mut touched = vec![0usize; n];
    for (k, pixels) in targets.marks.iter().enumerate() {
        let mut seen = Vec::new();
        for &i in pixels {
            let l = comps.labels[i] as usize;
            if l > 0 && !seen.contains(&l) {
                seen.push(l);
                let t = &mut touched[l - 1];
                *t = match *t {
                    0 => k + 1,
                    x if x == k + 1 => x,
                    _ => MANY,
                };
            }
        }
    }
    let mut on_mark = vec![0usize; n];
    let union = targets.union.bits();
    let mut missed = 0;
    for (i, &l) in comps.labels.iter().enumerate() {
        if l > 0 && union[i] {
            on_mark[l as usize - 1] += 1;
        } else if l == 0 && union[i] {
            missed += 1;
        }
    }
    let mut b = FgLossBreakdown {
        missed,
        under_seg: missed,
        ..Default::default()
    };
    for c in 0..n {
        match touched[c] {
            0 => b.incorrect += comps.areas[c],
            MANY => b.under_seg += comps.areas[c],
            _ => {
                b.correct += on_mark[c];
                b.over_seg += comps.areas[c] - on_mark[c];
            }
        }
    }
    let total = targets.union.count().max(1) as f64;
    b.loss = (cfg.weight_over * b.over_seg as f64 + cfg.weight_under * b.under_seg as f64
        + cfg.weight_incorrect * b.incorrect as f64
        - cfg.weight_correct * b.correct as f64)
        / total;
    b
}

/// A marked frame's raw subtraction mask with its mark geometry.
#[derive(Clone, Debug)]
pub struct TuningFrame {
    pub raw: BinaryMask,
    pub targets: MarkTargets,
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub params: RefineParams,
    pub loss: f64,
    pub history: Vec<f64>,
}

/// Swarm search over the refinement box. The identity parameters are always
/// particle 0, so the result never scores worse than no refinement.
pub fn pso_tune(
    frames: &[TuningFrame],
    params: &DerivedParams,
    cfg: &ForegroundConfig,
    seed: u64,
) -> Result<TuneOutcome> {
    if frames.is_empty() {
        return Err(Error::Precondition("refinement tuning needs a marked frame".into()));
    }
    let area_hi = 4.0 * params.area_max;
    let lower = [0.0; 4];
    let upper = [area_hi, cfg.pso.max_majority_reps, (params.body_length / 2.0).floor(), area_hi];
    let cache: Mutex<HashMap<RefineParams, f64>> = Mutex::new(HashMap::new());
    let eval = |x: &[f64]| {
        let p = to_params(x);
        if let Some(&l) = cache.lock().expect("loss cache").get(&p) {
            return l;
        }
        // equal losses prefer fewer and earlier operations
        let l = mean_loss(frames, &p, cfg) + TIE_BREAK * complexity(&p);
        cache.lock().expect("loss cache").insert(p, l);
        l
    };
    // identity first, then each single operation at a modest setting
    let a = params.area_min.round().min(area_hi);
    let seeds = [
        vec![0.0; 4],
        vec![a, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, a],
        vec![0.0, 1.0f64.min(upper[1]), 0.0, 0.0],
        vec![0.0, 0.0, 1.0f64.min(upper[2]), 0.0],
    ];
    let r = minimize(&lower, &upper, &seeds, &cfg.pso, seed, eval);
    let best = to_params(&r.best);
    Ok(TuneOutcome {
        params: best,
        loss: r.best_loss - TIE_BREAK * complexity(&best),
        history: r.history,
    })
}

pub fn mean_loss(frames: &[TuningFrame], p: &RefineParams, cfg: &ForegroundConfig) -> f64 {
    frames
        .iter()
        .map(|f| fg_loss(&refine(&f.raw, p), &f.targets, cfg).loss)
        .sum::<f64>()
        / frames.len() as f64
}

const TIE_BREAK: f64 = 1e-9;

fn complexity(p: &RefineParams) -> f64 {
    (p.majority_reps + p.close_size) as f64 + if p.area_post > 0 { 0.5 } else { 0.0 }
}

fn to_params(x: &[f64]) -> RefineParams {
    let r = |v: f64| v.round().max(0.0) as u32;
    RefineParams {
        area_pre: r(x[0]),
        majority_reps: r(x[1]),
        close_size: r(x[2]),
        area_post: r(x[3]),
    }
}
