//! Tracking metrics against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::synth::GroundTruth;
use crate::tracklets::Tracklet;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub gt_cov: f64,
    pub mt: usize,
    pub pt: usize,
    pub ml: usize,
    pub faf: f64,
    pub ids: usize,
    pub id_integ: usize,
    pub fn_assoc: usize,
    pub avg_pos_error: f64,
    pub gt_positions: usize,
    pub matched: usize,
    pub false_alarms: usize,
}

/// One matched (track state, GT state) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchPair {
    pub frame: usize,
    pub track: u64,
    pub gt: u64,
    pub distance: f64,
}

/// Per frame, greedy one-to-one assignment of track states to GT states in
/// ascending (distance, track id, gt id) order, within `match_dist`.
pub fn match_frames(tracks: &[Tracklet], gt: &GroundTruth, match_dist: f64) -> Vec<MatchPair> {
    let mut by_frame: BTreeMap<usize, (Vec<(u64, crate::Point)>, Vec<(u64, crate::Point)>)> = BTreeMap::new();
    for t in tracks {
        for s in &t.states {
            by_frame.entry(s.frame).or_default().0.push((t.id, s.center));
        }
    }
    for g in &gt.targets {
        for s in &g.states {
            by_frame.entry(s.frame).or_default().1.push((g.id, s.center));
        }
    }
    let mut out = Vec::new();
    for (frame, (ts, gs)) in by_frame {
        let mut cand: Vec<MatchPair> = Vec::new();
        for &(tid, tp) in &ts {
            for &(gid, gp) in &gs {
                let d = tp.dist(gp);
                if d <= match_dist {
                    cand.push(MatchPair {
                        frame,
                        track: tid,
                        gt: gid,
                        distance: d,
                    });
                }
            }
        }
        cand.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.track.cmp(&b.track))
                .then(a.gt.cmp(&b.gt))
        });
        let mut used_t = Vec::new();
        let mut used_g = Vec::new();
        for c in cand {
            if used_t.contains(&c.track) || used_g.contains(&c.gt) {
                continue;
            }
            used_t.push(c.track);
            used_g.push(c.gt);
            out.push(c);
        }
    }
    out
}

/// Identity changes of a sequence of (frame, id): every change, and the
/// changes not reverted to the former id within `window` frames. A change
/// that returns to the former id closes the excursion and is not counted.
pub fn identity_changes(seq: &[(usize, u64)], window: usize) -> (usize, usize) {
    let mut ids = 0;
    for w in seq.windows(2) {
        ids += (w[0].1 != w[1].1) as usize;
    }
    let mut integ = 0;
    let mut i = 1;
    while i < seq.len() {
        if seq[i].1 == seq[i - 1].1 {
            i += 1;
            continue;
        }
        let former = seq[i - 1].1;
        let start = seq[i].0;
        match (i + 1..seq.len()).take_while(|&j| seq[j].0 <= start + window).find(|&j| seq[j].1 == former) {
            Some(j) => i = j + 1,
            None => {
                integ += 1;
                i += 1;
            }
        }
    }
    (ids, integ)
}

pub fn evaluate(tracks: &[Tracklet], gt: &GroundTruth, match_dist: f64, window: usize) -> MetricsReport {
    let pairs = match_frames(tracks, gt, match_dist);
    let gt_positions: usize = gt.targets.iter().map(|g| g.states.len()).sum();
    let track_states: usize = tracks.iter().map(|t| t.states.len()).sum();
    let matched = pairs.len();

    let mut per_gt: BTreeMap<u64, Vec<(usize, u64)>> = BTreeMap::new();
    let mut per_track: BTreeMap<u64, Vec<(usize, u64)>> = BTreeMap::new();
    for p in &pairs {
        per_gt.entry(p.gt).or_default().push((p.frame, p.track));
        per_track.entry(p.track).or_default().push((p.frame, p.gt));
    }
    let (mut mt, mut pt, mut ml) = (0, 0, 0);
    for g in &gt.targets {
        let covered = per_gt.get(&g.id).map_or(0, Vec::len) as f64 / g.states.len().max(1) as f64;
        if covered > 0.8 {
            mt += 1;
        } else if covered < 0.2 {
            ml += 1;
        } else {
            pt += 1;
        }
    }
    let (mut ids, mut id_integ) = (0, 0);
    for seq in per_track.values() {
        let (a, b) = identity_changes(seq, window);
        ids += a;
        id_integ += b;
    }
    let fn_assoc = per_gt
        .values()
        .map(|seq| seq.windows(2).filter(|w| w[0].1 != w[1].1).count())
        .sum();
    MetricsReport {
        gt_cov: if gt_positions == 0 { 1.0 } else { matched as f64 / gt_positions as f64 },
        mt,
        pt,
        ml,
        faf: (track_states - matched) as f64 / gt.frame_count.max(1) as f64,
        ids,
        id_integ,
        fn_assoc,
        avg_pos_error: if matched == 0 {
            0.0
        } else {
            pairs.iter().map(|p| p.distance).sum::<f64>() / matched as f64
        },
        gt_positions,
        matched,
        false_alarms: track_states - matched,
    }
}
