//! Binary morphology on [`BinaryMask`]: connected components, the 3×3
//! majority filter and disc closing via exact Euclidean distance transforms.

use serde::{Deserialize, Serialize};

use crate::media::BinaryMask;

/// 4-connected component labelling. Label 0 is background; components are
/// numbered from 1 in raster order of their first pixel.
#[derive(Clone, Debug)]
pub struct Components {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    /// `areas[k]` is the pixel count of label `k + 1`.
    pub areas: Vec<usize>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn label(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// Pixel indices of every component, in raster order.
    pub fn pixel_lists(&self) -> Vec<Vec<usize>> {
        let mut lists: Vec<Vec<usize>> = self.areas.iter().map(|&a| Vec::with_capacity(a)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                lists[l as usize - 1].push(i);
            }
        }
        lists
    }
}

pub fn label_components(mask: &BinaryMask) -> Components {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let id = areas.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if bits[j] && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        areas.push(area);
    }
    Components {
        width: mask.width(),
        height: mask.height(),
        labels,
        areas,
    }
}

/// Removes 4-connected components with fewer than `min_area` pixels.
pub fn remove_small(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    if min_area <= 1 {
        return mask.clone();
    }
    let comps = label_components(mask);
    let bits = comps
        .labels
        .iter()
        .map(|&l| l > 0 && comps.areas[l as usize - 1] >= min_area)
        .collect();
    BinaryMask::from_bits(mask.width(), mask.height(), bits)
}

/// One majority pass: a pixel is foreground iff at least 5 of its 3×3
/// neighbourhood (itself included) are. Outside the frame counts as background.
pub fn majority(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        let mut n = 0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (u, v) = (x + dx, y + dy);
                if u >= 0 && v >= 0 && u < w && v < h && mask.get_signed(u, v) {
                    n += 1;
                }
            }
        }
        n >= 5
    })
}

const FAR: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas), in place.
fn dt_1d(f: &mut [f64], v: &mut [usize], z: &mut [f64], out: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
    f.copy_from_slice(out);
}

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `feature` is true. Pixels with no feature anywhere get a huge value.
pub fn squared_distance(width: u32, height: u32, feature: impl Fn(usize) -> bool) -> Vec<f64> {
    let (w, h) = (width as usize, height as usize);
    let mut grid: Vec<f64> = (0..w * h).map(|i| if feature(i) { 0.0 } else { FAR }).collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        dt_1d(&mut f[..h], &mut v[..h], &mut z[..=h], &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = f[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        dt_1d(&mut f[..w], &mut v[..w], &mut z[..=w], &mut out[..w]);
        row.copy_from_slice(&f[..w]);
    }
    grid
}

/// Dilation by the disc `dx² + dy² ≤ r²`.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let bits = mask.bits();
    let d = squared_distance(mask.width(), mask.height(), |i| bits[i]);
    let r2 = (radius * radius) as f64;
    BinaryMask::from_bits(mask.width(), mask.height(), d.iter().map(|&v| v <= r2).collect())
}

/// Erosion by the disc `dx² + dy² ≤ r²`; pixels outside the frame count as
/// foreground so that closing never eats into the border.
pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let bits = mask.bits();
    let d = squared_distance(mask.width(), mask.height(), |i| !bits[i]);
    let r2 = (radius * radius) as f64;
    BinaryMask::from_bits(mask.width(), mask.height(), d.iter().map(|&v| v > r2).collect())
}

pub fn close(mask: &BinaryMask, radius: u32) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

/// The four refinement parameters, applied in field order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefineParams {
    pub area_pre: u32,
    pub majority_reps: u32,
    pub close_size: u32,
    pub area_post: u32,
}

impl RefineParams {
    pub const IDENTITY: RefineParams = RefineParams {
        area_pre: 0,
        majority_reps: 0,
        close_size: 0,
        area_post: 0,
    };
}

pub fn refine(mask: &BinaryMask, p: &RefineParams) -> BinaryMask {
    let mut m = remove_small(mask, p.area_pre as usize);
    for _ in 0..p.majority_reps {
        m = majority(&m);
    }
    m = close(&m, p.close_size);
    remove_small(&m, p.area_post as usize)
}
