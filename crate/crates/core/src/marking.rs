//! User marks: three clicks plus a brush size locating one target in one
//! frame. Marks are the only user input to the tracker; every tuned parameter
//! downstream is derived from them here.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::{Config, MarkingConfig};
use crate::error::{Error, Result};
use crate::geometry::{axial, median, Point, Pose};
use crate::media::{BinaryMask, Video};

pub const MARK_DOCUMENT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserMark {
    pub frame: usize,
    pub p1: Point,
    pub p2: Point,
    pub p3: Point,
    pub brush_size: f64,
}

impl UserMark {
    pub fn new(frame: usize, p1: Point, p2: Point, p3: Point, brush_size: f64) -> Self {
        UserMark {
            frame,
            p1,
            p2,
            p3,
            brush_size,
        }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let inside = |p: Point| p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64;
        if ![self.p1, self.p2, self.p3].into_iter().all(inside) {
            return Err(Error::InvalidMark {
                frame: self.frame,
                reason: "point outside the frame".into(),
            });
        }
        if !(self.brush_size >= 1.0) {
            return Err(Error::InvalidMark {
                frame: self.frame,
                reason: format!("brush size {} < 1", self.brush_size),
            });
        }
        if self.p1.dist(self.p2) < 1e-9 && self.p2.dist(self.p3) < 1e-9 {
            return Err(Error::DegenerateMark(self.frame));
        }
        Ok(())
    }

    pub fn spline(&self) -> Spline {
        Spline::through(self.p1, self.p2, self.p3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedFrame {
    pub frame: usize,
    pub marks: Vec<UserMark>,
}

/// The persisted, versioned mark set of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkDocument {
    pub version: u32,
    pub frames: Vec<MarkedFrame>,
}

impl MarkDocument {
    pub fn new(mut frames: Vec<MarkedFrame>) -> Self {
        frames.sort_by_key(|f| f.frame);
        MarkDocument {
            version: MARK_DOCUMENT_VERSION,
            frames,
        }
    }

    pub fn validate(&self, width: u32, height: u32, frame_count: usize) -> Result<()> {
        if self.version != MARK_DOCUMENT_VERSION {
            return Err(Error::Serde(format!("unsupported mark document version {}", self.version)));
        }
        for mf in &self.frames {
            if mf.frame == 0 || mf.frame > frame_count {
                return Err(Error::FrameOutOfRange {
                    index: mf.frame,
                    count: frame_count,
                });
            }
            for m in &mf.marks {
                if m.frame != mf.frame {
                    return Err(Error::InvalidMark {
                        frame: m.frame,
                        reason: format!("listed under frame {}", mf.frame),
                    });
                }
                m.validate(width, height)?;
            }
        }
        Ok(())
    }

    pub fn total_marks(&self) -> usize {
        self.frames.iter().map(|f| f.marks.len()).sum()
    }

    pub fn frame(&self, t: usize) -> Option<&MarkedFrame> {
        self.frames.iter().find(|f| f.frame == t)
    }
}

/// Quadratic Bézier whose on-curve midpoint (t = ½) is the middle click.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spline {
    pub start: Point,
    pub control: Point,
    pub end: Point,
}

impl Spline {
    pub fn through(p1: Point, p2: Point, p3: Point) -> Self {
        Spline {
            start: p1,
            control: p2 * 2.0 - (p1 + p3) * 0.5,
            end: p3,
        }
    }

    pub fn at(&self, t: f64) -> Point {
        let u = 1.0 - t;
        self.start * (u * u) + self.control * (2.0 * u * t) + self.end * (t * t)
    }

    fn derivative(&self, t: f64) -> Point {
        (self.control - self.start) * (2.0 * (1.0 - t)) + (self.end - self.control) * (2.0 * t)
    }

    pub fn arc_length(&self) -> f64 {
        // 64 panels of 5-point Gauss-Legendre
        const NODES: [(f64, f64); 5] = [
            (0.0, 0.568_888_888_888_888_9),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let panels = 64;
        let h = 1.0 / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * h;
            for (x, w) in NODES {
                total += w * 0.5 * h * self.derivative(mid + 0.5 * h * x).norm();
            }
        }
        total
    }

    /// Exact Euclidean distance from `q` to the curve segment t ∈ [0, 1].
    pub fn distance(&self, q: Point) -> f64 {
        // B(t) = a t² + b t + s; minimise |B(t) - q|² via its cubic derivative.
        let a = self.start - self.control * 2.0 + self.end;
        let b = (self.control - self.start) * 2.0;
        let d = self.start - q;
        let roots = solve_cubic(
            2.0 * a.dot(a),
            3.0 * a.dot(b),
            b.dot(b) + 2.0 * a.dot(d),
            b.dot(d),
        );
        let mut best = self.start.dist(q).min(self.end.dist(q));
        for t in roots {
            if (0.0..=1.0).contains(&t) {
                best = best.min(self.at(t).dist(q));
            }
        }
        best
    }

    /// Axis-aligned bounds of the control polygon, which contain the curve.
    pub fn bounds(&self) -> (Point, Point) {
        let xs = [self.start.x, self.control.x, self.end.x];
        let ys = [self.start.y, self.control.y, self.end.y];
        let min = Point::new(xs.iter().copied().fold(f64::MAX, f64::min), ys.iter().copied().fold(f64::MAX, f64::min));
        let max = Point::new(xs.iter().copied().fold(f64::MIN, f64::max), ys.iter().copied().fold(f64::MIN, f64::max));
        (min, max)
    }
}

/// Real roots of `a x³ + b x² + c x + d`, falling back to lower degrees.
fn solve_cubic(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-12 * scale {
        if b.abs() <= 1e-12 * scale {
            if c.abs() <= 1e-12 * scale {
                return vec![];
            }
            return vec![-d / c];
        }
        let disc = c * c - 4.0 * b * d;
        if disc < 0.0 {
            return vec![];
        }
        let s = disc.sqrt();
        return vec![(-c + s) / (2.0 * b), (-c - s) / (2.0 * b)];
    }
    let (b, c, d) = (b / a, c / a, d / a);
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() + shift]
    } else if p.abs() < 1e-300 {
        vec![shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let phi = ((-q / 2.0) / (r * r * r)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift)
            .collect()
    };
    // one Newton polish per root
    for x in roots.iter_mut() {
        let f = ((*x + b) * *x + c) * *x + d;
        let df = (3.0 * *x + 2.0 * b) * *x + c;
        if df.abs() > 1e-14 {
            *x -= f / df;
        }
    }
    roots
}

/// A mark rendered into pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterizedMark {
    pub mask: BinaryMask,
    pub pose: Pose,
    pub area: usize,
}

/// Inclusion slack for pixels whose distance equals the brush radius.
const RADIUS_EPS: f64 = 1e-9;

pub fn rasterize_mark(mark: &UserMark, width: u32, height: u32) -> Result<RasterizedMark> {
    mark.validate(width, height)?;
    let spline = mark.spline();
    let r = mark.brush_size * 0.5;
    let (lo, hi) = spline.bounds();
    let x0 = (lo.x - r).floor().max(0.0) as u32;
    let y0 = (lo.y - r).floor().max(0.0) as u32;
    let x1 = ((hi.x + r).ceil() as i64).min(width as i64 - 1).max(0) as u32;
    let y1 = ((hi.y + r).ceil() as i64).min(height as i64 - 1).max(0) as u32;
    let mut mask = BinaryMask::new(width, height);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if spline.distance(Point::new(x as f64, y as f64)) <= r + RADIUS_EPS {
                mask.set(x, y, true);
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    let center = if n > 0 {
        Point::new(sx / n as f64, sy / n as f64)
    } else {
        mark.p2
    };
    let dir = mark.p3 - mark.p1;
    let orientation = if dir.norm() > 1e-9 {
        axial(dir.y.atan2(dir.x))
    } else {
        let d = mark.p2 - mark.p1;
        axial(d.y.atan2(d.x))
    };
    let pose = Pose::new(center, orientation, spline.arc_length(), mark.brush_size);
    Ok(RasterizedMark { mask, pose, area: n })
}

/// Frames the user must mark, ascending and duplicate-free.
///
/// The first and last frames and every chunk overlap frame are always
/// included; evenly spaced interior frames are added until the expected mark
/// count reaches the configured minimum.
pub fn schedule_mark_frames(
    frame_count: usize,
    chunk_bounds: &[usize],
    targets_per_frame_estimate: usize,
    min_total_marks: usize,
) -> Vec<usize> {
    let mut required: BTreeSet<usize> = [1, frame_count.max(1)].into_iter().collect();
    required.extend(chunk_bounds.iter().copied().filter(|&b| b >= 1 && b <= frame_count));
    let estimate = targets_per_frame_estimate.max(1);
    let enough = |n: usize| n * estimate >= min_total_marks;
    if enough(required.len()) || frame_count <= 2 {
        return required.into_iter().collect();
    }
    let mut extra = min_total_marks.div_ceil(estimate).saturating_sub(required.len());
    loop {
        let mut set = required.clone();
        let span = (frame_count - 1) as f64;
        for j in 1..=extra {
            let t = 1.0 + (j as f64 * span / (extra + 1) as f64);
            set.insert((t + 0.5).floor() as usize);
        }
        if enough(set.len()) || set.len() >= frame_count || extra >= frame_count {
            return set.into_iter().collect();
        }
        extra += 1;
    }
}

/// The schedule for an incrementally growing mark set: before any marks
/// exist only the required frames are requested; afterwards the estimate is
/// the mark count of the first marked frame.
pub fn schedule_for_marks(
    frame_count: usize,
    chunk_bounds: &[usize],
    marks: &MarkDocument,
    cfg: &MarkingConfig,
) -> Vec<usize> {
    match marks.frames.iter().find(|f| !f.marks.is_empty()) {
        None => schedule_mark_frames(frame_count, chunk_bounds, usize::MAX / 64, cfg.min_total_marks),
        Some(first) => schedule_mark_frames(frame_count, chunk_bounds, first.marks.len(), cfg.min_total_marks),
    }
}

/// Every parameter the pipeline derives from user marks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Background-difference threshold, intensity levels.
    pub fg_threshold: u8,
    pub area_min: f64,
    pub area_max: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Ω: upper bound on targets in the scene.
    pub omega_cap: usize,
    pub land_dist: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: usize,
    pub motion_sigma: f64,
    /// Median spline length of the marks.
    pub body_length: f64,
    /// Median brush size of the marks.
    pub body_width: f64,
    pub mean_mark_area: f64,
}

/// Shape-derived parameters; `fg_threshold` is left at zero.
pub fn derive_shape_params(
    marked_frames: &[MarkedFrame],
    width: u32,
    height: u32,
    cfg: &MarkingConfig,
) -> Result<DerivedParams> {
    if marked_frames.len() < 2 {
        return Err(Error::Precondition(format!(
            "{} marked frames; at least two are required",
            marked_frames.len()
        )));
    }
    let mut areas = Vec::new();
    let mut ratios = Vec::new();
    let mut lengths = Vec::new();
    let mut widths = Vec::new();
    for m in marked_frames.iter().flat_map(|f| &f.marks) {
        let r = rasterize_mark(m, width, height)?;
        areas.push(r.area as f64);
        ratios.push(r.pose.length / r.pose.width);
        lengths.push(r.pose.length);
        widths.push(r.pose.width);
    }
    if areas.is_empty() {
        return Err(Error::Precondition("no marks".into()));
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_mark_area = areas.iter().sum::<f64>() / areas.len() as f64;
    let body_length = median(&mut lengths).expect("non-empty");
    let body_width = median(&mut widths).expect("non-empty");
    let theta1 = cfg.theta1_factor * body_length;
    Ok(DerivedParams {
        fg_threshold: 0,
        area_min: cfg.area_low * min(&areas),
        area_max: cfg.area_high * max(&areas),
        ratio_min: cfg.ratio_low * min(&ratios),
        ratio_max: cfg.ratio_high * max(&ratios),
        omega_cap: marked_frames.iter().map(|f| f.marks.len()).max().unwrap_or(0),
        land_dist: cfg.land_dist_factor * body_length,
        theta1,
        theta2: theta1,
        theta3: cfg.theta3,
        motion_sigma: cfg.motion_sigma_factor * body_length,
        body_length,
        body_width,
        mean_mark_area,
    })
}

/// Shape parameters plus the foreground threshold tuned on the marked frames.
pub fn derive_params(marked_frames: &[MarkedFrame], video: &dyn Video, cfg: &Config) -> Result<DerivedParams> {
    let mut params = derive_shape_params(marked_frames, video.width(), video.height(), &cfg.marking)?;
    let background = crate::foreground::build_background(video, cfg.foreground.background_samples)?;
    params.fg_threshold = crate::foreground::tune_threshold(marked_frames, video, &background)?;
    Ok(params)
}
