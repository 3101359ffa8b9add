//! Points, oriented poses and axial-angle helpers.
//!
//! Pixel `(x, y)` has its centre at the real coordinate `(x, y)`. Orientations
//! are axial: a pose and the same pose rotated by π describe the same target.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Wraps an angle into the axial range (-π/2, π/2].
pub fn axial(theta: f64) -> f64 {
    let mut t = theta % PI;
    if t <= -FRAC_PI_2 {
        t += PI;
    } else if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

/// Signed axial difference `b - a`, in (-π/2, π/2].
pub fn axial_diff(a: f64, b: f64) -> f64 {
    axial(b - a)
}

/// Interpolates along the shorter axial arc. The result is continuous with `a`
/// (not wrapped), so callers can keep orientation sequences unwrapped.
pub fn axial_lerp(a: f64, b: f64, t: f64) -> f64 {
    a + axial_diff(a, b) * t
}

/// Returns `b` shifted by a multiple of π so that it lies within π/2 of `reference`.
pub fn unwrap_axial(reference: f64, b: f64) -> f64 {
    reference + axial_diff(reference, b)
}

/// Weighted mean of axial angles via the doubled-angle circular mean.
pub fn axial_mean(items: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (w, theta) in items {
        s += w * (2.0 * theta).sin();
        c += w * (2.0 * theta).cos();
    }
    if s == 0.0 && c == 0.0 {
        return 0.0;
    }
    0.5 * s.atan2(c)
}

/// Location, orientation and extent of a target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub center: Point,
    /// Radians, axial.
    pub orientation: f64,
    /// Extent along the body axis, pixels.
    pub length: f64,
    /// Extent across the body axis, pixels.
    pub width: f64,
}

impl Pose {
    pub fn new(center: Point, orientation: f64, length: f64, width: f64) -> Self {
        Pose {
            center,
            orientation,
            length,
            width,
        }
    }

    /// Unit vector along the body axis.
    pub fn axis(&self) -> Point {
        Point::new(self.orientation.cos(), self.orientation.sin())
    }

    /// Unit vector across the body axis.
    pub fn normal(&self) -> Point {
        Point::new(-self.orientation.sin(), self.orientation.cos())
    }

    /// Whether `p` lies inside the oriented bounding box.
    pub fn contains(&self, p: Point) -> bool {
        let d = p - self.center;
        d.dot(self.axis()).abs() <= self.length * 0.5 && d.dot(self.normal()).abs() <= self.width * 0.5
    }

    /// Inclusive pixel rectangle `(x0, y0, x1, y1)` enclosing the oriented box,
    /// clipped to a `width × height` frame. `None` when fully outside.
    pub fn pixel_bounds(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let (c, s) = (self.orientation.cos().abs(), self.orientation.sin().abs());
        let hx = 0.5 * (self.length * c + self.width * s);
        let hy = 0.5 * (self.length * s + self.width * c);
        let x0 = (self.center.x - hx).floor().max(0.0);
        let y0 = (self.center.y - hy).floor().max(0.0);
        let x1 = (self.center.x + hx).ceil().min(width as f64 - 1.0);
        let y1 = (self.center.y + hy).ceil().min(height as f64 - 1.0);
        if x1 < x0 || y1 < y0 {
            return None;
        }
        Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }

    /// Calls `f(x, y)` for every pixel centre inside the oriented box.
    pub fn for_each_pixel(&self, width: u32, height: u32, mut f: impl FnMut(u32, u32)) {
        let Some((x0, y0, x1, y1)) = self.pixel_bounds(width, height) else {
            return;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(Point::new(x as f64, y as f64)) {
                    f(x, y);
                }
            }
        }
    }

    /// Component-wise interpolation; orientation follows the short axial arc.
    pub fn lerp(&self, other: &Pose, t: f64) -> Pose {
        Pose {
            center: self.center.lerp(other.center, t),
            orientation: axial_lerp(self.orientation, other.orientation, t),
            length: self.length + (other.length - self.length) * t,
            width: self.width + (other.width - self.width) * t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.center.is_finite()
            && self.orientation.is_finite()
            && self.length.is_finite()
            && self.width.is_finite()
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
