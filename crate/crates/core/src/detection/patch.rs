//! Oriented, scale-normalised patches and their HOG descriptors.
//!
//! A patch is 32 samples across the body axis by 64 samples along it. The
//! sampled region is `2 × scale` long and `scale` wide, `scale` being the
//! median body length, so every patch of a video shares one pixel scale.

use crate::geometry::Pose;
use crate::media::Frame;

pub const PATCH_ACROSS: usize = 32;
pub const PATCH_ALONG: usize = 64;
const CELL: usize = 8;
const BINS: usize = 9;
const CELLS_X: usize = PATCH_ACROSS / CELL;
const CELLS_Y: usize = PATCH_ALONG / CELL;
pub const DESCRIPTOR_LEN: usize = (CELLS_X - 1) * (CELLS_Y - 1) * 4 * BINS;

/// Luma patch, row-major with `PATCH_ACROSS` columns. Rows run along the
/// body axis, columns across it.
pub fn oriented_patch(frame: &Frame, center_x: f64, center_y: f64, orientation: f64, scale: f64) -> Vec<f32> {
    let (c, s) = (orientation.cos(), orientation.sin());
    let step_along = 2.0 * scale / PATCH_ALONG as f64;
    let step_across = scale / PATCH_ACROSS as f64;
    let mut out = Vec::with_capacity(PATCH_ALONG * PATCH_ACROSS);
    for r in 0..PATCH_ALONG {
        let a = (r as f64 + 0.5 - PATCH_ALONG as f64 / 2.0) * step_along;
        for k in 0..PATCH_ACROSS {
            let b = (k as f64 + 0.5 - PATCH_ACROSS as f64 / 2.0) * step_across;
            let x = center_x + a * c - b * s;
            let y = center_y + a * s + b * c;
            out.push(frame.sample_luma(x, y));
        }
    }
    out
}

/// HOG with 8×8 cells, 9 unsigned bins, 2×2-cell blocks at stride one and
/// L2-Hys block normalisation.
pub fn hog(patch: &[f32]) -> Vec<f32> {
    assert_eq!(patch.len(), PATCH_ALONG * PATCH_ACROSS);
    let (w, h) = (PATCH_ACROSS, PATCH_ALONG);
    let at = |x: usize, y: usize| patch[y * w + x];
    let mut cells = [[0f32; BINS]; CELLS_X * CELLS_Y];
    for y in 0..h {
        for x in 0..w {
            let gx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let pos = angle / (180.0 / BINS as f32) - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as i32).rem_euclid(BINS as i32) as usize;
            let b1 = (b0 + 1) % BINS;
            let cell = &mut cells[(y / CELL) * CELLS_X + x / CELL];
            cell[b0] += mag * (1.0 - frac);
            cell[b1] += mag * frac;
        }
    }
    let mut out = Vec::with_capacity(DESCRIPTOR_LEN);
    for by in 0..CELLS_Y - 1 {
        for bx in 0..CELLS_X - 1 {
            let mut block = Vec::with_capacity(4 * BINS);
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                block.extend_from_slice(&cells[(by + dy) * CELLS_X + bx + dx]);
            }
            l2_hys(&mut block);
            out.extend(block);
        }
    }
    out
}

fn l2_hys(v: &mut [f32]) {
    let norm = |v: &[f32]| (v.iter().map(|x| x * x).sum::<f32>() + 1e-6).sqrt();
    let n = norm(v);
    for x in v.iter_mut() {
        *x = (*x / n).min(0.2);
    }
    let n = norm(v);
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Head/tail-invariant descriptor: the mean HOG of the patch and its 180°
/// rotation.
pub fn describe(frame: &Frame, pose: &Pose, scale: f64) -> Vec<f32> {
    let patch = oriented_patch(frame, pose.center.x, pose.center.y, pose.orientation, scale);
    let rotated: Vec<f32> = patch.iter().rev().copied().collect();
    hog(&patch).iter().zip(hog(&rotated)).map(|(a, b)| 0.5 * (a + b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use std::f64::consts::PI;

    fn bar_frame() -> Frame {
        Frame::gray(64, 64, (0..64 * 64).map(|i| if (28..36).contains(&(i % 64)) { 200 } else { 30 }).collect())
    }

    #[test]
    fn descriptor_shape_and_norm() {
        let f = bar_frame();
        let d = describe(&f, &Pose::new(Point::new(32.0, 32.0), PI / 2.0, 20.0, 6.0), 20.0);
        assert_eq!(d.len(), DESCRIPTOR_LEN);
        assert_eq!(DESCRIPTOR_LEN, 756);
        assert!(d.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn flip_invariant() {
        let f = Frame::gray(64, 64, (0..64 * 64).map(|i| ((i * 7919) % 251) as u8).collect());
        let p = Pose::new(Point::new(30.0, 33.0), 0.4, 20.0, 6.0);
        let q = Pose { orientation: 0.4 + PI, ..p };
        let (a, b) = (describe(&f, &p, 16.0), describe(&f, &q, 16.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn patch_follows_orientation() {
        // along the vertical bar the patch centre column is bright
        let f = bar_frame();
        let p = oriented_patch(&f, 32.0, 32.0, PI / 2.0, 20.0);
        assert!(p[10 * PATCH_ACROSS + PATCH_ACROSS / 2] > 150.0);
        let q = oriented_patch(&f, 32.0, 32.0, 0.0, 20.0);
        assert!(q[10 * PATCH_ACROSS + PATCH_ACROSS / 2] < 50.0);
    }
}
