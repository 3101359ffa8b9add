//! Chunk planning for long videos and stitching of per-chunk results.

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::ChunkingConfig;
use crate::error::{Error, Result};
use crate::matching::concatenate;
use crate::tracklets::{ConnectionSource, TrackDocument};

/// Inclusive frame ranges; neighbours share exactly one frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub ranges: Vec<(usize, usize)>,
    pub overlaps: Vec<usize>,
}

impl ChunkPlan {
    pub fn is_single(&self) -> bool {
        self.ranges.len() == 1
    }
}

pub fn plan_chunks(frame_count: usize, cfg: &ChunkingConfig) -> Result<ChunkPlan> {
    let (ideal, min) = (cfg.ideal_len, cfg.min_len);
    if !(ideal > min && min > 1) {
        return Err(Error::Precondition(format!(
            "chunk lengths need ideal > min > 1, got ideal {ideal}, min {min}"
        )));
    }
    if frame_count == 0 {
        return Err(Error::Precondition("cannot plan chunks for an empty video".into()));
    }
    if frame_count <= cfg.trigger {
        return Ok(ChunkPlan {
            ranges: vec![(1, frame_count)],
            overlaps: vec![],
        });
    }
    let mut ranges = Vec::new();
    let mut start = 1;
    loop {
        let end = start + ideal - 1;
        if end >= frame_count {
            ranges.push((start, frame_count));
            break;
        }
        ranges.push((start, end));
        start = end;
    }
    if ranges.len() > 1 {
        let (s, e) = ranges[ranges.len() - 1];
        if e - s + 1 < min {
            ranges.pop();
            ranges.last_mut().expect("at least one range").1 = frame_count;
        }
    }
    let overlaps = ranges[1..].iter().map(|r| r.0).collect();
    Ok(ChunkPlan { ranges, overlaps })
}

/// Two candidates at the same distance; the lower id won.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StitchTie {
    pub frame: usize,
    pub earlier: u64,
    pub later: u64,
    pub distance: f64,
}

/// Shifts the ids of each chunk past those of the chunks before it so that
/// the documents can be combined without collisions.
pub fn disjoint_ids(chunks: &mut [TrackDocument]) {
    let mut offset = 0;
    for doc in chunks.iter_mut() {
        for t in doc.tracklets.iter_mut() {
            t.id += offset;
            for c in t.connections.iter_mut() {
                c.joined_id += offset;
            }
        }
        doc.next_id += offset;
        offset = doc.next_id - 1;
    }
}

/// Joins `later` onto `earlier` at their shared frame by greedy
/// nearest-centre matching; matched tracklets keep the earlier id.
pub fn stitch_pair(mut earlier: TrackDocument, later: TrackDocument) -> Result<(TrackDocument, Vec<StitchTie>)> {
    let o = earlier.last_frame();
    if later.first_frame != o {
        return Err(Error::Precondition(format!(
            "chunks must share one frame: earlier ends at {o}, later starts at {}",
            later.first_frame
        )));
    }
    let left: Vec<(u64, crate::Point)> = earlier
        .tracklets
        .iter()
        .filter_map(|t| t.state(o).map(|s| (t.id, s.center)))
        .collect();
    let right: Vec<(u64, crate::Point)> = later
        .tracklets
        .iter()
        .filter_map(|t| t.state(o).map(|s| (t.id, s.center)))
        .collect();
    let mut cand: Vec<(f64, u64, u64)> = left
        .iter()
        .flat_map(|&(l, lp)| right.iter().map(move |&(r, rp)| (lp.dist(rp), l, r)))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let (mut used_l, mut used_r) = (Vec::new(), Vec::new());
    let mut pairs = Vec::new();
    let mut ties = Vec::new();
    for (i, &(d, l, r)) in cand.iter().enumerate() {
        if used_l.contains(&l) || used_r.contains(&r) {
            continue;
        }
        let rival = cand[i + 1..]
            .iter()
            .take_while(|c| c.0 == d)
            .any(|c| (c.1 == l) != (c.2 == r) && !used_l.contains(&c.1) && !used_r.contains(&c.2));
        if rival {
            warn!(frame = o, earlier = l, later = r, distance = d, "ambiguous stitch resolved by lower id");
            ties.push(StitchTie {
                frame: o,
                earlier: l,
                later: r,
                distance: d,
            });
        }
        used_l.push(l);
        used_r.push(r);
        pairs.push((l, r));
    }

    let (later_last, later_next) = (later.last_frame(), later.next_id);
    let mut rest = later.tracklets;
    for (l, r) in pairs {
        let i = rest.iter().position(|t| t.id == r).expect("matched tracklet present");
        let mut tail = rest.remove(i);
        let head = earlier.get_mut(l)?;
        tail.states.remove(0);
        tail.annotations.retain(|a| a.frame > o);
        if tail.states.is_empty() {
            head.connections.extend(tail.connections);
            head.complete = tail.complete;
            head.exited = tail.exited;
        } else {
            concatenate(head, tail, vec![], ConnectionSource::Stitch);
        }
    }
    let next_id = earlier.next_id.max(later_next);
    for t in rest {
        earlier.insert(t);
    }
    earlier.frame_count = later_last - earlier.first_frame + 1;
    earlier.next_id = next_id;
    Ok((earlier, ties))
}

/// Stitches consecutive chunk documents into one.
pub fn stitch(mut chunks: Vec<TrackDocument>) -> Result<(TrackDocument, Vec<StitchTie>)> {
    if chunks.is_empty() {
        return Err(Error::Precondition("nothing to stitch".into()));
    }
    disjoint_ids(&mut chunks);
    let mut it = chunks.into_iter();
    let mut doc = it.next().expect("non-empty");
    let mut ties = Vec::new();
    for next in it {
        let (d, t) = stitch_pair(doc, next)?;
        doc = d;
        ties.extend(t);
    }
    Ok((doc, ties))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Pose};
    use crate::tracklets::{TrackState, Tracklet};

    fn plan(n: usize) -> Vec<(usize, usize)> {
        plan_chunks(n, &ChunkingConfig::default()).unwrap().ranges
    }

    #[test]
    fn plan_examples() {
        assert_eq!(plan(6000), vec![(1, 6000)]);
        let p = plan_chunks(12000, &ChunkingConfig::default()).unwrap();
        assert_eq!(p.ranges, vec![(1, 5000), (5000, 9999), (9999, 12000)]);
        assert_eq!(p.overlaps, vec![5000, 9999]);
        assert_eq!(plan(10100), vec![(1, 5000), (5000, 10100)]);
    }

    #[test]
    fn bad_lengths_are_rejected() {
        let cfg = ChunkingConfig {
            ideal_len: 300,
            min_len: 300,
            trigger: 10,
        };
        assert!(plan_chunks(1000, &cfg).is_err());
    }

    fn track(id: u64, frames: std::ops::RangeInclusive<usize>, y: f64) -> Tracklet {
        Tracklet::new(
            id,
            frames
                .map(|f| TrackState::from_pose(f, &Pose::new(Point::new(f as f64 * 0.1, y), 0.0, 10.0, 3.0), false))
                .collect(),
        )
    }

    fn chunk(first: usize, last: usize, ys: &[f64]) -> TrackDocument {
        let mut d = TrackDocument::new(
            last - first + 1,
            100,
            100,
            ys.iter().enumerate().map(|(i, &y)| track(i as u64 + 1, first..=last, y)).collect(),
            0.6,
        );
        d.first_frame = first;
        d
    }

    #[test]
    fn identical_overlap_states_stitch_one_to_one() {
        let (doc, ties) = stitch(vec![chunk(1, 50, &[10.0, 40.0]), chunk(50, 90, &[40.0, 10.0])]).unwrap();
        assert!(ties.is_empty());
        assert_eq!(doc.tracklets.len(), 2);
        assert_eq!((doc.first_frame, doc.last_frame()), (1, 90));
        for t in &doc.tracklets {
            t.validate().unwrap();
            assert_eq!((t.start(), t.end()), (1, 90));
            assert!(t.states.iter().all(|s| s.center.y == t.states[0].center.y));
        }
    }

    #[test]
    fn missing_target_stays_unstitched() {
        let (doc, _) = stitch(vec![chunk(1, 50, &[10.0, 40.0]), chunk(50, 90, &[40.0])]).unwrap();
        let spans: Vec<(usize, usize)> = doc.tracklets.iter().map(|t| (t.start(), t.end())).collect();
        assert_eq!(spans, vec![(1, 50), (1, 90)]);
    }

    #[test]
    fn equidistant_candidates_warn_and_take_lower_id() {
        let (doc, ties) = stitch(vec![chunk(1, 50, &[20.0]), chunk(50, 90, &[10.0, 30.0])]).unwrap();
        assert_eq!(ties.len(), 1);
        let t = doc.tracklets.iter().find(|t| t.end() == 90 && t.start() == 1).unwrap();
        assert_eq!(t.state(60).unwrap().center.y, 10.0);
    }

    #[test]
    fn stitching_is_order_independent() {
        let mut chunks = vec![
            chunk(1, 50, &[10.0, 40.0, 70.0]),
            chunk(50, 90, &[41.0, 69.0, 12.0, 90.0]),
            chunk(90, 140, &[90.0, 70.0, 40.0]),
        ];
        disjoint_ids(&mut chunks);
        let [a, b, c]: [TrackDocument; 3] = chunks.try_into().unwrap();
        let (ab, _) = stitch_pair(a.clone(), b.clone()).unwrap();
        let (left, _) = stitch_pair(ab, c.clone()).unwrap();
        let (bc, _) = stitch_pair(b, c).unwrap();
        let (right, _) = stitch_pair(a, bc).unwrap();
        assert_eq!(left, right);
    }
}
