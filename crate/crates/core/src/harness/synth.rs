//! Synthetic scenes: oriented capsules over a textured static background,
//! with exact ground truth.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{axial, Point};
use crate::marking::{MarkDocument, MarkedFrame, UserMark};
use crate::media::{ColorMode, Frame, InMemoryVideo, Manifest};
use crate::rng::{self, label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Motion {
    Linear,
    RandomWalk,
    Crossing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    /// Targets following `motion`.
    pub targets: usize,
    pub motion: Motion,
    /// Extra crossing pairs placed in the lower band of a linear scene.
    pub crossing_pairs: usize,
    pub crossing_angle_deg: f64,
    /// Frames around the midpoint during which crossing targets exist; the
    /// whole video when unset.
    pub crossing_lifetime: Option<usize>,
    /// Sideways offset of the second target of each crossing pair; at 0 the
    /// two centres coincide at the midpoint frame.
    pub crossing_miss: f64,
    pub body_length: f64,
    pub body_width: f64,
    /// Target brightness above the background.
    pub contrast: f64,
    /// Per-frame Gaussian pixel noise (std, intensity levels).
    pub noise: f64,
    /// Amplitude of the static background texture.
    pub texture: f64,
    /// Speed in pixels per frame.
    pub speed: f64,
    /// Intervals per target during which it is not rendered. Crossing
    /// targets have none.
    pub dropouts_per_target: usize,
    pub dropout_len: usize,
    /// Single bright pixels scattered per frame.
    pub speckles_per_frame: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 320,
            height: 240,
            frames: 300,
            targets: 10,
            motion: Motion::Linear,
            crossing_pairs: 0,
            crossing_angle_deg: 90.0,
            crossing_lifetime: None,
            crossing_miss: 0.0,
            body_length: 20.0,
            body_width: 6.0,
            contrast: 80.0,
            noise: 3.0,
            texture: 12.0,
            speed: 0.8,
            dropouts_per_target: 0,
            dropout_len: 6,
            speckles_per_frame: 0,
            seed: 1,
        }
    }
}

impl SceneSpec {
    /// Reads a TOML or (by `.json` extension) JSON scene description.
    pub fn load(path: &Path) -> Result<SceneSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtState {
    pub frame: usize,
    pub center: Point,
    pub orientation: f64,
    /// False while the target is present but not rendered.
    pub visible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtTarget {
    pub id: u64,
    /// Contiguous ascending frames between entry and exit.
    pub states: Vec<GtState>,
}

impl GtTarget {
    pub fn entry(&self) -> usize {
        self.states[0].frame
    }

    pub fn exit(&self) -> usize {
        self.states[self.states.len() - 1].frame
    }

    pub fn state(&self, frame: usize) -> Option<&GtState> {
        if frame < self.entry() || frame > self.exit() {
            return None;
        }
        self.states.get(frame - self.entry())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub body_length: f64,
    pub body_width: f64,
    pub targets: Vec<GtTarget>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub struct Scene {
    pub spec: SceneSpec,
    pub video: InMemoryVideo,
    pub gt: GroundTruth,
}

struct Path2 {
    positions: Vec<Point>,
    orientations: Vec<f64>,
    /// First and last present frame, 0-based.
    span: (usize, usize),
    crossing: bool,
}

fn linear_path(start: Point, velocity: Point, frames: usize) -> Path2 {
    let theta = axial(velocity.y.atan2(velocity.x));
    Path2 {
        positions: (0..frames).map(|i| start + velocity * i as f64).collect(),
        orientations: vec![theta; frames],
        span: (0, frames - 1),
        crossing: false,
    }
}

/// Renders the scene and its ground truth; deterministic per seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.frames < 2 || spec.width < 16 || spec.height < 16 {
        return Err(Error::Precondition("scene needs ≥2 frames and ≥16×16 pixels".into()));
    }
    let mut r = rng::stream(spec.seed, &[label::SCENE]);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let n = spec.frames;
    let margin = spec.body_length;
    let mut paths = Vec::new();

    let crossing_band = if spec.crossing_pairs > 0 && spec.motion != Motion::Crossing {
        0.4
    } else {
        0.0
    };
    let lane_height = h * (1.0 - crossing_band);
    match spec.motion {
        Motion::Linear => {
            let room = (w - 2.0 * margin).max(1.0);
            let speed = spec.speed.min(0.9 * room / (n - 1) as f64);
            for i in 0..spec.targets {
                let y = lane_height * (i + 1) as f64 / (spec.targets + 1) as f64;
                let dir = if i % 2 == 0 { 1.0 } else { -1.0 };
                let travel = speed * (n - 1) as f64;
                let slack = (room - travel).max(0.0);
                let offset = r.random_range(0.0..=slack);
                let x0 = if dir > 0.0 { margin + offset } else { w - margin - offset };
                paths.push(linear_path(Point::new(x0, y), Point::new(dir * speed, 0.0), n));
            }
        }
        Motion::RandomWalk => {
            let turn = Normal::new(0.0, 0.15).expect("valid normal");
            for _ in 0..spec.targets {
                let mut p = Point::new(r.random_range(margin..w - margin), r.random_range(margin..lane_height - margin));
                let mut heading: f64 = r.random_range(-PI..PI);
                let mut positions = Vec::with_capacity(n);
                let mut orientations = Vec::with_capacity(n);
                for _ in 0..n {
                    positions.push(p);
                    orientations.push(axial(heading));
                    heading += turn.sample(&mut r);
                    let mut next = p + Point::new(heading.cos(), heading.sin()) * spec.speed;
                    if next.x < margin || next.x > w - margin {
                        heading = PI - heading;
                        next = p + Point::new(heading.cos(), heading.sin()) * spec.speed;
                    }
                    if next.y < margin || next.y > lane_height - margin {
                        heading = -heading;
                        next = p + Point::new(heading.cos(), heading.sin()) * spec.speed;
                    }
                    p = next;
                }
                paths.push(Path2 {
                    positions,
                    orientations,
                    span: (0, n - 1),
                    crossing: false,
                });
            }
        }
        Motion::Crossing => {}
    }

    let pairs = if spec.motion == Motion::Crossing {
        spec.targets.div_ceil(2).max(spec.crossing_pairs)
    } else {
        spec.crossing_pairs
    };
    let band_top = if spec.motion == Motion::Crossing { 0.0 } else { lane_height };
    let band_h = h - band_top;
    let mid = (n - 1) as f64 / 2.0;
    let span = match spec.crossing_lifetime {
        Some(l) if l < n => {
            let first = (mid - (l - 1) as f64 / 2.0).round() as usize;
            (first, first + l - 1)
        }
        _ => (0, n - 1),
    };
    let half_angle = spec.crossing_angle_deg.to_radians() / 2.0;
    for k in 0..pairs {
        let center = Point::new(w * (k + 1) as f64 / (pairs + 1) as f64, band_top + band_h / 2.0);
        let avail_y = (band_h / 2.0 - margin).max(1.0);
        let avail_x = (w / (pairs + 1) as f64 / 2.0).max(1.0) + w / (pairs + 1) as f64 * 0.5 - margin;
        let reach = (mid - span.0 as f64).max(1.0);
        let speed = spec
            .speed
            .min(0.95 * avail_y / (half_angle.sin() * reach).max(1e-9))
            .min(0.95 * avail_x.max(1.0) / (half_angle.cos() * reach).max(1e-9));
        for s in [1.0, -1.0] {
            let dir = Point::new(half_angle.cos(), s * half_angle.sin());
            let miss = if s < 0.0 { spec.crossing_miss } else { 0.0 };
            let start = center - dir * (speed * mid) + Point::new(miss, 0.0);
            let mut p = linear_path(start, dir * speed, n);
            p.span = span;
            p.crossing = true;
            paths.push(p);
        }
    }

    let targets: Vec<GtTarget> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (first, last) = p.span;
            let hidden = if p.crossing {
                Vec::new()
            } else {
                dropout_frames(n, spec.dropouts_per_target, spec.dropout_len, &mut r)
            };
            GtTarget {
                id: i as u64 + 1,
                states: (first..=last)
                    .map(|t| GtState {
                        frame: t + 1,
                        center: p.positions[t],
                        orientation: p.orientations[t],
                        visible: !hidden.contains(&(t + 1)),
                    })
                    .collect(),
            }
        })
        .collect();

    let background = render_background(spec, &mut r);
    let gt = GroundTruth {
        frame_count: n,
        width: spec.width,
        height: spec.height,
        body_length: spec.body_length,
        body_width: spec.body_width,
        targets,
    };
    let frames: Vec<Frame> = (1..=n)
        .into_par_iter()
        .map(|t| render_frame(spec, &background, &gt, t))
        .collect();
    Ok(Scene {
        spec: spec.clone(),
        video: InMemoryVideo::new(frames)?,
        gt,
    })
}

/// Evenly spread hidden intervals, each shifted by a small random jitter.
fn dropout_frames(n: usize, count: usize, len: usize, r: &mut rng::Rng) -> Vec<usize> {
    let mut out = Vec::new();
    for j in 1..=count {
        let centre = (j * n) as f64 / (count + 1) as f64;
        let jitter = r.random_range(-(n as f64) / (8.0 * (count + 1) as f64)..=(n as f64) / (8.0 * (count + 1) as f64));
        let start = (centre + jitter - len as f64 / 2.0).round().max(2.0) as usize;
        out.extend(start..(start + len).min(n));
    }
    out
}

fn render_background(spec: &SceneSpec, r: &mut rng::Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (r.random_range(0.02..0.12), r.random_range(0.02..0.12), r.random_range(0.0..2.0 * PI)))
        .collect();
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut bg = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = waves.iter().map(|&(fx, fy, ph)| (fx * x as f64 + fy * y as f64 + ph).sin()).sum::<f64>() / 4.0;
            let grain: f64 = r.random_range(-0.5..0.5);
            bg.push(80.0 + spec.texture * (s + grain));
        }
    }
    bg
}

/// Distance from `p` to the capsule's axis segment, and the signed
/// position along the axis in [-1, 1].
fn capsule_distance(p: Point, center: Point, orientation: f64, length: f64) -> (f64, f64) {
    let axis = Point::new(orientation.cos(), orientation.sin());
    let half = length / 2.0;
    let d = p - center;
    let along = d.dot(axis).clamp(-half, half);
    let nearest = center + axis * along;
    (p.dist(nearest), along / half.max(1e-9))
}

/// Whether pixel `p` lies on a target of the given pose (same rule as the
/// mark rasterizer for a straight mark of the same length and brush).
pub fn on_target(p: Point, center: Point, orientation: f64, length: f64, width: f64) -> bool {
    capsule_distance(p, center, orientation, length).0 <= width / 2.0 + 1e-9
}

fn render_frame(spec: &SceneSpec, background: &[f64], gt: &GroundTruth, t: usize) -> Frame {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut img: Vec<f64> = background.to_vec();
    let reach = spec.body_length / 2.0 + spec.body_width;
    for target in &gt.targets {
        let Some(s) = target.state(t) else { continue };
        if !s.visible {
            continue;
        }
        let x0 = (s.center.x - reach).floor().max(0.0) as usize;
        let x1 = ((s.center.x + reach).ceil() as usize).min(w - 1);
        let y0 = (s.center.y - reach).floor().max(0.0) as usize;
        let y1 = ((s.center.y + reach).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (d, along) = capsule_distance(Point::new(x as f64, y as f64), s.center, s.orientation, spec.body_length);
                if d <= spec.body_width / 2.0 + 1e-9 {
                    img[y * w + x] = 80.0 + spec.contrast * (0.85 + 0.15 * along);
                }
            }
        }
    }
    let mut r = rng::stream(spec.seed, &[label::SCENE, t as u64]);
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).expect("valid noise");
        for v in img.iter_mut() {
            *v += normal.sample(&mut r);
        }
    }
    for _ in 0..spec.speckles_per_frame {
        let i = r.random_range(0..w * h);
        img[i] = 80.0 + spec.contrast;
    }
    Frame::gray(spec.width, spec.height, img.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect())
}

/// Marks a simulated user would draw on `frames`: one straight three-click
/// mark per visible target whose clicks fall inside the frame.
pub fn marks_from_gt(gt: &GroundTruth, frames: &[usize]) -> MarkDocument {
    let inside = |p: Point| p.x >= 0.0 && p.y >= 0.0 && p.x < gt.width as f64 && p.y < gt.height as f64;
    let marked = frames
        .iter()
        .map(|&t| {
            let marks = gt
                .targets
                .iter()
                .filter_map(|g| g.state(t))
                .filter(|s| s.visible)
                .filter_map(|s| {
                    let axis = Point::new(s.orientation.cos(), s.orientation.sin()) * (gt.body_length / 2.0);
                    let (p1, p3) = (s.center - axis, s.center + axis);
                    (inside(p1) && inside(p3)).then(|| UserMark::new(t, p1, s.center, p3, gt.body_width))
                })
                .collect();
            MarkedFrame { frame: t, marks }
        })
        .collect();
    MarkDocument::new(marked)
}

/// Writes frames, manifest and ground truth into `dir`; returns the manifest path.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        frame_count: scene.gt.frame_count,
        width: scene.gt.width,
        height: scene.gt.height,
        color_mode: ColorMode::Gray,
        pattern: "frame_######.png".into(),
    };
    scene
        .video
        .frames()
        .par_iter()
        .enumerate()
        .try_for_each(|(i, f)| f.save(&dir.join(manifest.file_name(i + 1))))?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    scene.gt.save(&dir.join("gt.json"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marking::rasterize_mark;
    use crate::media::Video;

    fn small(motion: Motion, targets: usize) -> SceneSpec {
        SceneSpec {
            width: 160,
            height: 120,
            frames: 100,
            targets,
            motion,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn linear_target_moves_arithmetically() {
        let s = generate_scene(&small(Motion::Linear, 1)).unwrap();
        let c: Vec<Point> = s.gt.targets[0].states.iter().map(|s| s.center).collect();
        let step = c[1] - c[0];
        for w in c.windows(2) {
            let d = w[1] - w[0];
            assert!((d.x - step.x).abs() < 1e-9 && (d.y - step.y).abs() < 1e-9);
        }
    }

    #[test]
    fn crossing_pair_meets_at_midpoint() {
        let mut spec = small(Motion::Crossing, 2);
        spec.frames = 101;
        let s = generate_scene(&spec).unwrap();
        let (a, b) = (&s.gt.targets[0], &s.gt.targets[1]);
        assert!(a.state(51).unwrap().center.dist(b.state(51).unwrap().center) < 1e-9);
        assert!(a.state(1).unwrap().center.dist(b.state(1).unwrap().center) > 20.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = small(Motion::RandomWalk, 3);
        let (a, b) = (generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        for t in 1..=spec.frames {
            assert_eq!(a.video.frame(t).unwrap().data(), b.video.frame(t).unwrap().data());
        }
        assert_eq!(a.gt, b.gt);
    }

    #[test]
    fn marks_cover_rendered_targets() {
        let mut spec = small(Motion::Linear, 2);
        spec.noise = 0.0;
        let s = generate_scene(&spec).unwrap();
        let doc = marks_from_gt(&s.gt, &[1]);
        let frame = s.video.frame(1).unwrap();
        for m in &doc.frames[0].marks {
            let r = rasterize_mark(m, spec.width, spec.height).unwrap();
            for i in r.mask.ones() {
                assert!(frame.data()[i] as f64 >= 80.0 + spec.contrast * 0.7 - 1.0);
            }
        }
    }

    #[test]
    fn dropouts_hide_targets() {
        let mut spec = small(Motion::Linear, 1);
        spec.dropouts_per_target = 2;
        let s = generate_scene(&spec).unwrap();
        let hidden = s.gt.targets[0].states.iter().filter(|s| !s.visible).count();
        assert_eq!(hidden, 2 * spec.dropout_len);
    }
}
