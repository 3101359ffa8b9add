//! The five manual editing operations and their inverses.

use serde::{Deserialize, Serialize};

use super::interpolate::linear_gap;
use crate::error::{Error, Result};
use crate::geometry::{Point, Pose};
use crate::matching::concatenate;
use crate::tracklets::{ConnectionSource, TrackDocument, TrackState, Tracklet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ManualOp {
    Add {
        states: Vec<TrackState>,
    },
    Remove {
        id: u64,
    },
    /// Appends `second` to `first`; `first` keeps its id.
    Join {
        first: u64,
        second: u64,
    },
    /// `frame` goes to the later part, which gets a new id.
    Break {
        id: u64,
        frame: usize,
    },
    Adjust {
        id: u64,
        frame: usize,
        center: Point,
        orientation: f64,
    },
    /// Inverse of the above: drop `remove`, put back `restore`, reset the id
    /// counter.
    Restore {
        remove: Vec<u64>,
        restore: Vec<Tracklet>,
        next_id: u64,
    },
}

/// Splits tracklet `id` so that `frame` starts a new tracklet; connections
/// from `frame` on move with the later part. Returns the new id.
pub fn split_tracklet(doc: &mut TrackDocument, id: u64, frame: usize) -> Result<u64> {
    let t = doc.get(id)?;
    if frame <= t.start() || frame > t.end() {
        return Err(Error::InvalidOperation(format!(
            "cannot break tracklet {id} at frame {frame} (spans {}..={})",
            t.start(),
            t.end()
        )));
    }
    let new_id = doc.allocate_id();
    let t = doc.get_mut(id)?;
    let k = frame - t.start();
    let tail_states = t.states.split_off(k);
    let (keep, moved): (Vec<_>, Vec<_>) = t.connections.drain(..).partition(|c| c.frame < frame);
    t.connections = keep.into_iter().filter(|c| c.frame != frame).collect();
    let moved: Vec<_> = moved.into_iter().filter(|c| c.frame != frame).collect();
    let (keep_a, moved_a): (Vec<_>, Vec<_>) = t.annotations.drain(..).partition(|a| a.frame < frame);
    t.annotations = keep_a;
    let mut tail = Tracklet::new(new_id, tail_states);
    tail.connections = moved;
    tail.annotations = moved_a;
    tail.complete = std::mem::take(&mut t.complete);
    tail.exited = std::mem::take(&mut t.exited);
    doc.insert(tail);
    Ok(new_id)
}

fn snapshot(doc: &TrackDocument, ids: &[u64]) -> Vec<Tracklet> {
    ids.iter().filter_map(|&i| doc.get(i).ok().cloned()).collect()
}

/// Applies `op` and returns the operation that undoes it.
pub fn apply_manual(doc: &mut TrackDocument, op: &ManualOp) -> Result<ManualOp> {
    let next_id = doc.next_id;
    match op {
        ManualOp::Add { states } => {
            let id = doc.allocate_id();
            let t = Tracklet::new(id, states.clone());
            t.validate()?;
            doc.insert(t);
            Ok(ManualOp::Restore {
                remove: vec![id],
                restore: vec![],
                next_id,
            })
        }
        ManualOp::Remove { id } => {
            let t = doc.remove(*id)?;
            Ok(ManualOp::Restore {
                remove: vec![],
                restore: vec![t],
                next_id,
            })
        }
        ManualOp::Join { first, second } => {
            if first == second {
                return Err(Error::InvalidOperation("cannot join a tracklet to itself".into()));
            }
            let (a, b) = (doc.get(*first)?, doc.get(*second)?);
            if a.end() >= b.start() {
                return Err(Error::InvalidOperation(format!(
                    "tracklets {first} and {second} overlap or are out of order"
                )));
            }
            let before = snapshot(doc, &[*first, *second]);
            let b = doc.remove(*second)?;
            let a = doc.get_mut(*first)?;
            let gap = linear_gap(&a.states[a.states.len() - 1], &b.states[0]);
            concatenate(a, b, gap, ConnectionSource::Manual);
            Ok(ManualOp::Restore {
                remove: vec![*first],
                restore: before,
                next_id,
            })
        }
        ManualOp::Break { id, frame } => {
            let before = snapshot(doc, &[*id]);
            let tail = split_tracklet(doc, *id, *frame)?;
            Ok(ManualOp::Restore {
                remove: vec![*id, tail],
                restore: before,
                next_id,
            })
        }
        ManualOp::Adjust {
            id,
            frame,
            center,
            orientation,
        } => {
            let before = snapshot(doc, &[*id]);
            let t = doc.get_mut(*id)?;
            adjust(t, *frame, *center, *orientation)?;
            Ok(ManualOp::Restore {
                remove: vec![*id],
                restore: before,
                next_id,
            })
        }
        ManualOp::Restore {
            remove,
            restore,
            next_id: restored_next,
        } => {
            let mut removed = Vec::new();
            for id in remove {
                removed.push(doc.remove(*id)?);
            }
            let mut reinserted = Vec::new();
            for t in restore {
                if doc.get(t.id).is_ok() {
                    return Err(Error::InvalidOperation(format!("tracklet {} already exists", t.id)));
                }
                reinserted.push(t.id);
                doc.insert(t.clone());
            }
            doc.next_id = *restored_next;
            Ok(ManualOp::Restore {
                remove: reinserted,
                restore: removed,
                next_id,
            })
        }
    }
}

/// Sets the pose at `frame` and re-interpolates the interpolated states
/// between it and the nearest detection-backed neighbours.
pub fn adjust(t: &mut Tracklet, frame: usize, center: Point, orientation: f64) -> Result<()> {
    let s = t
        .state_mut(frame)
        .ok_or_else(|| Error::InvalidOperation(format!("tracklet has no state at frame {frame}")))?;
    s.center = center;
    s.orientation = crate::geometry::axial(orientation);
    s.interpolated = false;
    let k = frame - t.start();
    let prev = (0..k).rev().find(|&i| !t.states[i].interpolated);
    let next = (k + 1..t.states.len()).find(|&i| !t.states[i].interpolated);
    for (lo, hi) in [(prev, Some(k)), (Some(k), next)] {
        if let (Some(lo), Some(hi)) = (lo, hi) {
            let (a, b) = (t.states[lo], t.states[hi]);
            for (i, g) in (lo + 1..hi).zip(linear_gap(&a, &b)) {
                t.states[i] = TrackState {
                    confidence: t.states[i].confidence,
                    ..g
                };
            }
        }
    }
    Ok(())
}

/// A pose at `frame` as a state supplied by the user.
pub fn user_state(frame: usize, pose: &Pose) -> TrackState {
    let mut s = TrackState::from_pose(frame, pose, false);
    s.confidence = 1.0;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracklets::TrackDocument;

    fn line(id: u64, start: usize, end: usize) -> Tracklet {
        Tracklet::new(
            id,
            (start..=end)
                .map(|f| {
                    TrackState::from_pose(f, &Pose::new(Point::new(f as f64, 2.0 * f as f64), 0.2, 9.0, 3.0), false)
                })
                .collect(),
        )
    }

    fn doc() -> TrackDocument {
        TrackDocument::new(100, 100, 200, vec![line(1, 1, 40), line(2, 50, 90)], 0.6)
    }

    #[test]
    fn every_op_has_an_exact_inverse() {
        let ops = vec![
            ManualOp::Add {
                states: line(0, 3, 9).states,
            },
            ManualOp::Remove { id: 2 },
            ManualOp::Join { first: 1, second: 2 },
            ManualOp::Break { id: 2, frame: 70 },
            ManualOp::Adjust {
                id: 1,
                frame: 20,
                center: Point::new(30.0, 30.0),
                orientation: 1.0,
            },
        ];
        for op in ops {
            let mut d = doc();
            let inv = apply_manual(&mut d, &op).unwrap();
            assert_ne!(d, doc(), "{op:?} changed nothing");
            apply_manual(&mut d, &inv).unwrap();
            assert_eq!(d, doc(), "{op:?}");
        }
    }

    #[test]
    fn break_then_join_restores_states() {
        let mut d = doc();
        apply_manual(&mut d, &ManualOp::Break { id: 2, frame: 70 }).unwrap();
        let tail = d.tracklets.iter().find(|t| t.start() == 70).unwrap().id;
        apply_manual(&mut d, &ManualOp::Join { first: 2, second: tail }).unwrap();
        assert_eq!(d.get(2).unwrap().states, doc().get(2).unwrap().states);
        assert_eq!(d.tracklets.len(), 2);
    }

    #[test]
    fn join_rejects_overlap_and_break_rejects_first_frame() {
        let mut d = TrackDocument::new(100, 100, 200, vec![line(1, 1, 40), line(2, 30, 90)], 0.6);
        assert!(apply_manual(&mut d, &ManualOp::Join { first: 1, second: 2 }).is_err());
        assert!(apply_manual(&mut d, &ManualOp::Break { id: 1, frame: 1 }).is_err());
        assert!(apply_manual(&mut d, &ManualOp::Remove { id: 9 }).is_err());
    }

    #[test]
    fn adjust_shifts_interpolated_neighbours_linearly() {
        let mut t = line(1, 1, 21);
        for s in t.states.iter_mut().filter(|s| s.frame != 1 && s.frame != 21 && s.frame != 11) {
            s.interpolated = true;
        }
        let before = t.clone();
        let c = t.state(11).unwrap().center + Point::new(10.0, 0.0);
        adjust(&mut t, 11, c, 0.2).unwrap();
        for f in 2..21usize {
            let expect = 10.0 * (1.0 - (f as f64 - 11.0).abs() / 10.0);
            let dx = t.state(f).unwrap().center.x - before.state(f).unwrap().center.x;
            assert!((dx - expect).abs() < 1e-9, "frame {f}: {dx} vs {expect}");
        }
    }
}
