use crate::detection::{Blob, Detection};
use crate::geometry::Pose;

use super::track::{TrackState, Tracklet};
use super::tunnel::{Lane, TunnelGraph};

/// Result of converting lanes into the initial tracklet set.
#[derive(Clone, Debug, Default)]
pub struct BuildOutcome {
    pub tracklets: Vec<Tracklet>,
    /// Detections of lanes with no majority of mapped blobs.
    pub discarded: Vec<Detection>,
}

/// Index of the detection mapped to each blob of a frame: a detection maps to
/// the blob containing its (rounded) centre pixel.
fn map_detections(blobs: &[Blob], detections: &[Detection], width: u32) -> Vec<Option<usize>> {
    let mut mapped = vec![None; blobs.len()];
    for (di, d) in detections.iter().enumerate() {
        let (x, y) = (d.center.x.round(), d.center.y.round());
        if x < 0.0 || y < 0.0 || x >= width as f64 {
            continue;
        }
        let p = (y as u64 * width as u64 + x as u64) as u32;
        if let Some(k) = blobs.iter().position(|b| b.pixels.binary_search(&p).is_ok()) {
            mapped[k].get_or_insert(di);
        }
    }
    mapped
}

/// Lanes with more than half of their blobs mapped to a detection become
/// tracklets; unmapped frames are interpolated between the nearest mapped
/// neighbours and held constant beyond the first/last mapped blob.
/// `blobs[t - 1]` and `detections[t - 1]` belong to frame `t`.
pub fn build_tracklets(
    graph: &TunnelGraph,
    lanes: &[Lane],
    blobs: &[Vec<Blob>],
    detections: &[Vec<Detection>],
    width: u32,
) -> BuildOutcome {
    let mapping: Vec<Vec<Option<usize>>> = blobs
        .iter()
        .zip(detections)
        .map(|(b, d)| map_detections(b, d, width))
        .collect();
    let mut out = BuildOutcome::default();
    let mut next_id = 1;
    for lane in lanes {
        let hits: Vec<Option<&Detection>> = lane
            .nodes
            .iter()
            .map(|&n| {
                let node = graph.nodes[n];
                mapping[node.frame - 1][node.blob].map(|di| &detections[node.frame - 1][di])
            })
            .collect();
        let mapped = hits.iter().filter(|h| h.is_some()).count();
        if 2 * mapped <= hits.len() {
            out.discarded.extend(hits.into_iter().flatten().cloned());
            continue;
        }
        let poses: Vec<Option<Pose>> = hits.iter().map(|h| h.map(Detection::pose)).collect();
        let states = fill_lane(lane.start_frame, &poses);
        out.tracklets.push(Tracklet::new(next_id, states));
        next_id += 1;
    }
    out
}

/// States for consecutive frames from `start`, interpolating `None` entries.
pub fn fill_lane(start: usize, poses: &[Option<Pose>]) -> Vec<TrackState> {
    let known: Vec<usize> = (0..poses.len()).filter(|&i| poses[i].is_some()).collect();
    let first = known[0];
    let last = *known.last().expect("at least one mapped pose");
    let mut states = Vec::with_capacity(poses.len());
    let mut next_known = 0;
    for (i, p) in poses.iter().enumerate() {
        let frame = start + i;
        if let Some(p) = p {
            states.push(TrackState::from_pose(frame, p, false));
            continue;
        }
        let pose = if i < first {
            poses[first].unwrap()
        } else if i > last {
            poses[last].unwrap()
        } else {
            while known[next_known + 1] < i {
                next_known += 1;
            }
            let (a, b) = (known[next_known], known[next_known + 1]);
            let t = (i - a) as f64 / (b - a) as f64;
            poses[a].unwrap().lerp(&poses[b].unwrap(), t)
        };
        let mut s = TrackState::from_pose(frame, &pose, true);
        s.orientation = crate::geometry::axial(s.orientation);
        states.push(s);
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn pose(x: f64) -> Option<Pose> {
        Some(Pose::new(Point::new(x, 2.0 * x), 0.1, 10.0, 3.0))
    }

    #[test]
    fn interpolated_states_lie_between_anchors() {
        let poses = vec![None, pose(0.0), None, None, pose(9.0), None];
        let s = fill_lane(11, &poses);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0].center, Point::new(0.0, 0.0));
        assert!(s[0].interpolated && !s[1].interpolated);
        assert!((s[2].center.x - 3.0).abs() < 1e-12 && (s[3].center.y - 12.0).abs() < 1e-12);
        assert_eq!(s[5].center, Point::new(9.0, 18.0));
        assert_eq!(s.iter().map(|s| s.frame).collect::<Vec<_>>(), (11..17).collect::<Vec<_>>());
    }
}
