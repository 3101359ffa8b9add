//! Foreground claiming and the configuration-level fitness.

use crate::geometry::Pose;
use crate::media::BinaryMask;

/// F*: the foreground minus every pixel inside the given oriented boxes.
pub fn claim_foreground(mask: &BinaryMask, known: impl IntoIterator<Item = Pose>) -> BinaryMask {
    let mut out = mask.clone();
    let (w, h) = mask.dims();
    for pose in known {
        pose.for_each_pixel(w, h, |x, y| out.set(x, y, false));
    }
    out
}

/// Fit_G: the number of F* pixels inside the union of the boxes.
pub fn fit_global(config: &[Pose], unclaimed: &BinaryMask) -> usize {
    let (w, h) = unclaimed.dims();
    let mut hits: Vec<usize> = Vec::new();
    for pose in config {
        pose.for_each_pixel(w, h, |x, y| {
            if unclaimed.get(x, y) {
                hits.push(unclaimed.index(x, y));
            }
        });
    }
    if config.len() > 1 {
        hits.sort_unstable();
        hits.dedup();
    }
    hits.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn rect_pose(cx: f64, cy: f64, l: f64, w: f64) -> Pose {
        Pose::new(Point::new(cx, cy), 0.0, l, w)
    }

    #[test]
    fn empty_mask_scores_zero() {
        let m = BinaryMask::new(20, 20);
        assert_eq!(fit_global(&[rect_pose(10.0, 10.0, 8.0, 4.0)], &m), 0);
    }

    #[test]
    fn box_covering_blob() {
        // 12 × 10 blob, box exactly around it
        let m = BinaryMask::from_fn(40, 40, |x, y| (10..22).contains(&x) && (10..20).contains(&y));
        assert_eq!(m.count(), 120);
        assert_eq!(fit_global(&[rect_pose(15.5, 14.5, 12.0, 10.0)], &m), 120);
    }

    #[test]
    fn overlapping_boxes_use_union() {
        let m = BinaryMask::from_fn(40, 40, |x, y| (10..22).contains(&x) && (10..20).contains(&y));
        let a = rect_pose(15.5, 14.5, 12.0, 10.0);
        let b = rect_pose(17.5, 14.5, 12.0, 10.0);
        let oracle = (0..40u32)
            .flat_map(|y| (0..40u32).map(move |x| (x, y)))
            .filter(|&(x, y)| m.get(x, y) && (a.contains(Point::new(x as f64, y as f64)) || b.contains(Point::new(x as f64, y as f64))))
            .count();
        assert_eq!(fit_global(&[a, b], &m), oracle);
        assert_eq!(oracle, 120);
    }

    #[test]
    fn claim_is_set_difference() {
        let m = BinaryMask::from_fn(30, 30, |x, y| (5..20).contains(&x) && (5..15).contains(&y));
        let p = Pose::new(Point::new(18.0, 10.0), 0.4, 10.0, 5.0);
        let f = claim_foreground(&m, [p]);
        for y in 0..30 {
            for x in 0..30 {
                let expect = m.get(x, y) && !p.contains(Point::new(x as f64, y as f64));
                assert_eq!(f.get(x, y), expect);
            }
        }
        assert_eq!(claim_foreground(&m, []), m);
        assert!(claim_foreground(&m, [rect_pose(15.0, 15.0, 40.0, 40.0)]).is_empty());
    }
}
