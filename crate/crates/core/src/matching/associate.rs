//! Association graph, length-two cycles and the iterated matching loop.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::appearance::{sample_delta_stats, PatchShape};
use super::ga::{Endpoint, MotionStats};
use super::sweep::{run_direction, Direction, Landing, SweepInput};
use crate::config::Config;
use crate::correction::{interpolate_gap, GapModel};
use crate::error::Result;
use crate::marking::DerivedParams;
use crate::media::{BinaryMask, Video};
use crate::rng::{self, label};
use crate::tracklets::{ConfidenceModel, Connection, ConnectionSource, TrackState, Tracklet};

pub type Vertex = (u64, Endpoint);

/// Directed edges between tracklet endpoints, one per landing.
#[derive(Clone, Debug, Default)]
pub struct AssociationGraph {
    pub edges: Vec<(Vertex, Vertex)>,
}

impl AssociationGraph {
    pub fn from_landings(landings: &[Landing]) -> Self {
        let edges = landings
            .iter()
            .filter(|l| l.from != l.to)
            .map(|l| match l.direction {
                Direction::Forward => ((l.from, Endpoint::End), (l.to, Endpoint::Begin)),
                Direction::Backward => ((l.from, Endpoint::Begin), (l.to, Endpoint::End)),
            })
            .collect();
        AssociationGraph { edges }
    }

    pub fn in_degree(&self, v: Vertex) -> usize {
        self.edges.iter().filter(|e| e.1 == v).count()
    }

    pub fn has_edge(&self, a: Vertex, b: Vertex) -> bool {
        self.edges.iter().any(|e| *e == (a, b))
    }

    /// Pairs `(earlier, later)` with `End(earlier) → Begin(later)` and
    /// `Begin(later) → End(earlier)`, both vertices of in-degree one.
    pub fn clean_cycles(&self) -> Vec<JoinRecord> {
        let mut out: Vec<JoinRecord> = self
            .edges
            .iter()
            .filter(|(a, b)| a.1 == Endpoint::End && b.1 == Endpoint::Begin)
            .filter(|(a, b)| self.has_edge(*b, *a))
            .map(|&(a, b)| JoinRecord {
                earlier: a.0,
                later: b.0,
                in_degree_end: self.in_degree(a),
                in_degree_begin: self.in_degree(b),
            })
            .filter(|j| j.in_degree_end == 1 && j.in_degree_begin == 1)
            .collect();
        out.sort_by_key(|j| (j.earlier, j.later));
        out.dedup();
        out
    }
}

/// A join made by matching, with the in-degrees observed when it was made.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRecord {
    pub earlier: u64,
    pub later: u64,
    pub in_degree_end: usize,
    pub in_degree_begin: usize,
}

/// Appends `later` (and the gap states) to `earlier`, logging a connection
/// at the first frame after `earlier`'s end. Keeps `earlier`'s id.
pub fn concatenate(earlier: &mut Tracklet, later: Tracklet, gap: Vec<TrackState>, source: ConnectionSource) {
    debug_assert!(earlier.end() < later.start());
    let frame = earlier.end() + 1;
    earlier.states.extend(gap);
    earlier.states.extend(later.states);
    earlier.connections.push(Connection {
        frame,
        joined_id: later.id,
        source,
    });
    earlier.connections.extend(later.connections);
    earlier.annotations.extend(later.annotations);
    earlier.complete = later.complete;
    earlier.exited = later.exited;
}

/// What one matching pass did.
#[derive(Clone, Debug, Default)]
pub struct IterationOutcome {
    pub joins: Vec<JoinRecord>,
    pub forward: Vec<Landing>,
    pub backward: Vec<Landing>,
}

/// Joins every clean cycle of the association graph; gap frames are filled
/// by [`interpolate_gap`] and rescored with `model` when given.
pub fn match_iteration(
    tracklets: &mut Vec<Tracklet>,
    forward: &[Landing],
    backward: &[Landing],
    gaps: &GapModel,
    model: Option<&ConfidenceModel>,
) -> Result<Vec<JoinRecord>> {
    let mut all = forward.to_vec();
    all.extend_from_slice(backward);
    let graph = AssociationGraph::from_landings(&all);
    let mut joins = graph.clean_cycles();
    for j in &joins {
        assert!(j.in_degree_end == 1 && j.in_degree_begin == 1, "join through a contested endpoint");
    }
    let start_of: HashMap<u64, usize> = tracklets.iter().map(|t| (t.id, t.start())).collect();
    joins.retain(|j| start_of.contains_key(&j.earlier) && start_of.contains_key(&j.later));
    joins.sort_by_key(|j| (start_of[&j.later], j.later));

    let mut by_id: BTreeMap<u64, Tracklet> = tracklets.drain(..).map(|t| (t.id, t)).collect();
    let mut root: HashMap<u64, u64> = HashMap::new();
    let find = |root: &HashMap<u64, u64>, mut id: u64| {
        while let Some(&r) = root.get(&id) {
            id = r;
        }
        id
    };
    let mut made = Vec::new();
    for j in joins {
        let a = find(&root, j.earlier);
        if a == j.later || !by_id.contains_key(&j.later) {
            continue;
        }
        let later = by_id.remove(&j.later).expect("present");
        let earlier = by_id.get_mut(&a).expect("root present");
        if earlier.end() >= later.start() {
            by_id.insert(later.id, later);
            continue;
        }
        let last = earlier.states[earlier.states.len() - 1];
        let mut gap = interpolate_gap(&last, &later.states[0], gaps)?;
        if let Some(m) = model {
            for s in gap.iter_mut() {
                s.confidence = m.score_pose(&*gaps.video.frame(s.frame)?, &s.pose());
            }
        }
        debug!(earlier = a, later = later.id, gap = gap.len(), "matching join");
        concatenate(earlier, later, gap, ConnectionSource::Matching);
        root.insert(j.later, a);
        made.push(j);
    }
    tracklets.extend(by_id.into_values());
    Ok(made)
}

/// Per-run inputs of [`match_tracklets`].
pub struct MatchInput<'a> {
    pub video: &'a dyn Video,
    pub masks: &'a [BinaryMask],
    pub params: &'a DerivedParams,
    pub model: Option<&'a ConfidenceModel>,
    pub cfg: &'a Config,
    pub seed: u64,
}

/// Result of the full matching loop.
#[derive(Clone, Debug, Default)]
pub struct MatchOutcome {
    pub tracklets: Vec<Tracklet>,
    pub iterations: Vec<IterationOutcome>,
    pub motion: Option<MotionStats>,
    pub stats: Option<super::appearance::DeltaStats>,
}

impl MatchOutcome {
    pub fn joins(&self) -> impl Iterator<Item = &JoinRecord> {
        self.iterations.iter().flat_map(|i| i.joins.iter())
    }
}

/// Up to `iterations` passes of both sweeps plus cycle joining, stopping
/// after a pass that joins nothing. Motion statistics come from `t0`.
pub fn match_tracklets(t0: Vec<Tracklet>, input: &MatchInput) -> Result<MatchOutcome> {
    let motion = MotionStats::from_tracklets(&t0);
    let shape = PatchShape::for_body(input.params.body_length, input.params.body_width);
    let mc = &input.cfg.matching;
    let mut tracklets = t0;
    let mut out = MatchOutcome {
        motion: Some(motion),
        ..MatchOutcome::default()
    };
    if tracklets.is_empty() {
        out.tracklets = tracklets;
        return Ok(out);
    }
    for it in 0..mc.iterations {
        let seed = rng::derive(input.seed, &[it as u64]);
        let stats = sample_delta_stats(
            &tracklets,
            input.video,
            &shape,
            mc.templates,
            mc.delta_samples_per_tracklet,
            rng::derive(seed, &[label::DELTA]),
        )?;
        let sweep = SweepInput {
            tracklets: &tracklets,
            video: input.video,
            masks: input.masks,
            shape,
            stats,
            motion,
            omega_cap: input.params.omega_cap,
            land_dist: input.params.land_dist,
            cfg: mc,
        };
        let (fwd, bwd) = rayon::join(
            || run_direction(&sweep, Direction::Forward, seed),
            || run_direction(&sweep, Direction::Backward, seed),
        );
        let (fwd, bwd) = (fwd?, bwd?);
        let gaps = GapModel {
            video: input.video,
            shape,
            stats,
            motion,
            land_dist: input.params.land_dist,
            cfg: &input.cfg.correction,
            seed: rng::derive(seed, &[label::GAP]),
        };
        let joins = match_iteration(&mut tracklets, &fwd, &bwd, &gaps, input.model)?;
        tracklets.sort_by_key(|t| t.id);
        info!(
            iteration = it + 1,
            forward = fwd.len(),
            backward = bwd.len(),
            joins = joins.len(),
            tracklets = tracklets.len(),
            "matching pass"
        );
        let done = joins.is_empty();
        out.stats = Some(stats);
        out.iterations.push(IterationOutcome {
            joins,
            forward: fwd,
            backward: bwd,
        });
        if done {
            break;
        }
    }
    out.tracklets = tracklets;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn landing(direction: Direction, from: u64, to: u64) -> Landing {
        Landing {
            direction,
            from,
            to,
            frame: 1,
        }
    }

    #[test]
    fn clean_cycle_joins() {
        let g = AssociationGraph::from_landings(&[landing(Direction::Forward, 1, 2), landing(Direction::Backward, 2, 1)]);
        let c = g.clean_cycles();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].earlier, c[0].later), (1, 2));
    }

    #[test]
    fn contested_begin_blocks_join() {
        let g = AssociationGraph::from_landings(&[
            landing(Direction::Forward, 1, 2),
            landing(Direction::Backward, 2, 1),
            landing(Direction::Forward, 3, 2),
        ]);
        assert!(g.clean_cycles().is_empty());
        assert_eq!(g.in_degree((2, Endpoint::Begin)), 2);
    }

    #[test]
    fn one_way_edge_does_not_join() {
        let g = AssociationGraph::from_landings(&[landing(Direction::Forward, 1, 2)]);
        assert!(g.clean_cycles().is_empty());
    }
}
