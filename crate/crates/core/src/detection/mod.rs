//! Detections from foreground blobs: moment-based blob geometry, area and
//! aspect-ratio gating, and a HOG + linear SVM classifier trained from marks.

mod patch;
mod svm;

pub use patch::{describe, hog, oriented_patch, DESCRIPTOR_LEN, PATCH_ACROSS, PATCH_ALONG};
pub use svm::LinearSvm;

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DetectionConfig;
use crate::error::{Error, Result};
use crate::foreground::label_components;
use crate::geometry::{axial, Point, Pose};
use crate::marking::{rasterize_mark, DerivedParams, MarkedFrame};
use crate::media::{BinaryMask, Video};
use crate::rng;

/// One 4-connected foreground component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub frame: usize,
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<u32>,
    pub centroid: Point,
    pub area: usize,
    pub orientation: f64,
    pub length: f64,
    pub width: f64,
}

impl Blob {
    /// Geometry from second central moments. Extents are `sqrt(12 λ + 1)`
    /// for the covariance eigenvalues λ, exact for axis-aligned rectangles.
    pub fn from_pixels(frame: usize, pixels: Vec<u32>, image_width: u32) -> Blob {
        let w = image_width as usize;
        let n = pixels.len() as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &i in &pixels {
            sx += (i as usize % w) as f64;
            sy += (i as usize / w) as f64;
        }
        let (cx, cy) = (sx / n, sy / n);
        let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
        for &i in &pixels {
            let dx = (i as usize % w) as f64 - cx;
            let dy = (i as usize / w) as f64 - cy;
            m20 += dx * dx;
            m02 += dy * dy;
            m11 += dx * dy;
        }
        let (m20, m02, m11) = (m20 / n, m02 / n, m11 / n);
        let mean = 0.5 * (m20 + m02);
        let spread = (0.25 * (m20 - m02).powi(2) + m11 * m11).sqrt();
        let (l1, l2) = (mean + spread, (mean - spread).max(0.0));
        Blob {
            frame,
            area: pixels.len(),
            pixels,
            centroid: Point::new(cx, cy),
            orientation: axial(0.5 * (2.0 * m11).atan2(m20 - m02)),
            length: (12.0 * l1 + 1.0).sqrt(),
            width: (12.0 * l2 + 1.0).sqrt(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.centroid, self.orientation, self.length, self.width)
    }

    pub fn ratio(&self) -> f64 {
        self.length / self.width
    }
}

/// One blob per 4-connected component, in raster order of first pixel.
pub fn extract_blobs(mask: &BinaryMask, frame: usize) -> Vec<Blob> {
    let comps = label_components(mask);
    comps
        .pixel_lists()
        .into_iter()
        .map(|px| Blob::from_pixels(frame, px.into_iter().map(|i| i as u32).collect(), mask.width()))
        .collect()
}

pub fn passes_gate(blob: &Blob, params: &DerivedParams) -> bool {
    let area = blob.area as f64;
    let ratio = blob.ratio();
    area >= params.area_min && area <= params.area_max && ratio >= params.ratio_min && ratio <= params.ratio_max
}

pub fn gate(blobs: &[Blob], params: &DerivedParams) -> Vec<Blob> {
    blobs.iter().filter(|b| passes_gate(b, params)).cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    pub center: Point,
    pub orientation: f64,
    pub length: f64,
    pub width: f64,
    /// Index of the source blob in its frame's blob list.
    pub source_blob: usize,
    pub confidence: f64,
}

impl Detection {
    pub fn pose(&self) -> Pose {
        Pose::new(self.center, self.orientation, self.length, self.width)
    }
}

/// The trained blob classifier; `scale` is the patch scale it was trained at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub svm: LinearSvm,
    pub scale: f64,
}

impl Classifier {
    pub fn accepts(&self, frame: &crate::media::Frame, pose: &Pose) -> bool {
        self.svm.classify(&describe(frame, pose, self.scale))
    }
}

/// Training examples gathered from the marked frames.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub positives: Vec<Vec<f32>>,
    pub negatives: Vec<Vec<f32>>,
}

/// Positives are gated blobs whose centroid lies inside a mark and that touch
/// no other mark; negatives are gated blobs touching no mark or several marks,
/// topped up with random background patches.
pub fn collect_examples(
    video: &dyn Video,
    marked_frames: &[MarkedFrame],
    blobs: &[Vec<Blob>],
    params: &DerivedParams,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<TrainingSet> {
    assert_eq!(marked_frames.len(), blobs.len());
    let (w, h) = (video.width(), video.height());
    let scale = params.body_length;
    let mut set = TrainingSet::default();
    let mut mark_centers = Vec::new();
    for (mf, frame_blobs) in marked_frames.iter().zip(blobs) {
        let frame = video.frame(mf.frame)?;
        let mut masks = Vec::new();
        let mut centers = Vec::new();
        for m in &mf.marks {
            let r = rasterize_mark(m, w, h)?;
            centers.push(r.pose.center);
            masks.push(r.mask);
        }
        for b in frame_blobs.iter().filter(|b| passes_gate(b, params)) {
            let (x, y) = (b.centroid.x.round() as i64, b.centroid.y.round() as i64);
            let touched = masks.iter().filter(|m| b.pixels.iter().any(|&i| m.bits()[i as usize])).count();
            let inside = masks.iter().any(|m| m.get_signed(x, y));
            let d = describe(&frame, &b.pose(), scale);
            // a blob spanning several marks is merged targets, not a target
            if inside && touched == 1 {
                set.positives.push(d);
            } else if touched == 0 || touched > 1 {
                set.negatives.push(d);
            }
        }
        mark_centers.push((mf.frame, centers));
    }
    let wanted = cfg.min_examples.max(set.positives.len());
    let mut r = rng::stream(seed, &[rng::label::NEGATIVES]);
    let mut attempts = 0;
    while set.negatives.len() < wanted && attempts < 100 * wanted.max(1) && !mark_centers.is_empty() {
        attempts += 1;
        let (t, centers) = &mark_centers[r.random_range(0..mark_centers.len())];
        let c = Point::new(r.random_range(0.0..w as f64), r.random_range(0.0..h as f64));
        if centers.iter().any(|m| m.dist(c) < scale) {
            continue;
        }
        let theta = r.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let frame = video.frame(*t)?;
        let pose = Pose::new(c, theta, params.body_length, params.body_width);
        set.negatives.push(describe(&frame, &pose, scale));
    }
    Ok(set)
}

pub fn train_classifier(
    video: &dyn Video,
    marked_frames: &[MarkedFrame],
    blobs: &[Vec<Blob>],
    params: &DerivedParams,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<Classifier> {
    let set = collect_examples(video, marked_frames, blobs, params, cfg, seed)?;
    let svm = train_on(&set, cfg, seed)?;
    Ok(Classifier {
        svm,
        scale: params.body_length,
    })
}

pub fn train_on(set: &TrainingSet, cfg: &DetectionConfig, seed: u64) -> Result<LinearSvm> {
    if set.positives.len() < cfg.min_examples || set.negatives.len() < cfg.min_examples {
        return Err(Error::InsufficientExamples {
            positives: set.positives.len(),
            negatives: set.negatives.len(),
        });
    }
    if same_set(&set.positives, &set.negatives) {
        return Err(Error::DegenerateData(
            "positive and negative examples are identical".into(),
        ));
    }
    let mut xs = set.positives.clone();
    xs.extend(set.negatives.iter().cloned());
    let ys: Vec<bool> = (0..xs.len()).map(|i| i < set.positives.len()).collect();
    Ok(LinearSvm::train(&xs, &ys, cfg.svm_c, cfg.svm_epochs, seed))
}

fn same_set(a: &[Vec<f32>], b: &[Vec<f32>]) -> bool {
    let key = |v: &Vec<f32>| v.iter().map(|x| x.to_bits()).collect::<Vec<u32>>();
    let mut ka: Vec<_> = a.iter().map(key).collect();
    let mut kb: Vec<_> = b.iter().map(key).collect();
    ka.sort();
    ka.dedup();
    kb.sort();
    kb.dedup();
    ka == kb
}

/// Whether the classifier is skipped because targets are small.
pub fn classifier_bypassed(params: &DerivedParams, cfg: &DetectionConfig) -> bool {
    params.mean_mark_area < cfg.small_target_area
}

/// Detections of every frame. `blobs[t - 1]` holds the blobs of frame `t`.
pub fn detect(
    video: &dyn Video,
    blobs: &[Vec<Blob>],
    params: &DerivedParams,
    classifier: Option<&Classifier>,
    cfg: &DetectionConfig,
) -> Result<Vec<Vec<Detection>>> {
    let classifier = classifier.filter(|_| !classifier_bypassed(params, cfg));
    blobs
        .par_iter()
        .enumerate()
        .map(|(i, frame_blobs)| {
            let t = i + 1;
            let frame = match classifier {
                Some(_) if !frame_blobs.is_empty() => Some(video.frame(t)?),
                _ => None,
            };
            let mut out = Vec::new();
            for (k, b) in frame_blobs.iter().enumerate() {
                if !passes_gate(b, params) {
                    continue;
                }
                if let (Some(c), Some(f)) = (classifier, &frame) {
                    if !c.accepts(f, &b.pose()) {
                        continue;
                    }
                }
                out.push(Detection {
                    frame: t,
                    center: b.centroid,
                    orientation: b.orientation,
                    length: b.length,
                    width: b.width,
                    source_blob: k,
                    confidence: 0.0,
                });
            }
            Ok(out)
        })
        .collect()
}

pub fn write_detections_csv(detections: &[Vec<Detection>], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame", "x", "y", "orientation", "length", "width"])
        .map_err(|e| Error::Serde(e.to_string()))?;
    for d in detections.iter().flatten() {
        w.write_record([
            d.frame.to_string(),
            format!("{:.3}", d.center.x),
            format!("{:.3}", d.center.y),
            format!("{:.6}", d.orientation),
            format!("{:.3}", d.length),
            format!("{:.3}", d.width),
        ])
        .map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}
