//! One directional sweep: propagate targets from tracklet endpoints and
//! record where they land.

use serde::{Deserialize, Serialize};

use super::appearance::{DeltaStats, PatchShape, Templates};
use super::fitness::claim_foreground;
use super::ga::{ga_step, ActiveTarget, Endpoint, GaContext, MotionStats};
use crate::config::MatchingConfig;
use crate::error::Result;
use crate::media::{BinaryMask, Video};
use crate::rng::{self, label};
use crate::tracklets::Tracklet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// The endpoint targets start from; landings hit the opposite one.
    pub fn origin(self) -> Endpoint {
        match self {
            Direction::Forward => Endpoint::End,
            Direction::Backward => Endpoint::Begin,
        }
    }

    fn label(self) -> u64 {
        match self {
            Direction::Forward => label::FORWARD,
            Direction::Backward => label::BACKWARD,
        }
    }
}

/// A target from `from`'s origin endpoint reached `to`'s opposite endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landing {
    pub direction: Direction,
    pub from: u64,
    pub to: u64,
    pub frame: usize,
}

/// Shared inputs of both sweeps.
pub struct SweepInput<'a> {
    pub tracklets: &'a [Tracklet],
    pub video: &'a dyn Video,
    /// `masks[t - 1]` is the foreground of frame `t`.
    pub masks: &'a [BinaryMask],
    pub shape: PatchShape,
    pub stats: DeltaStats,
    pub motion: MotionStats,
    pub omega_cap: usize,
    pub land_dist: f64,
    pub cfg: &'a MatchingConfig,
}

/// Removes `q = in_frame + |Ψ| − (Ω + slack)` targets when positive: those
/// with the lowest age-normalised cumulative fitness, the older first on ties.
pub fn prune_targets(targets: &mut Vec<ActiveTarget>, in_frame: usize, omega: usize, slack: usize) -> usize {
    let q = (in_frame + targets.len()) as i64 - (omega + slack) as i64;
    if q <= 0 {
        return 0;
    }
    let q = (q as usize).min(targets.len());
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| {
        targets[a]
            .score()
            .total_cmp(&targets[b].score())
            .then(targets[b].age.cmp(&targets[a].age))
            .then(a.cmp(&b))
    });
    let mut drop: Vec<usize> = order[..q].to_vec();
    drop.sort_unstable_by(|a, b| b.cmp(a));
    for i in drop {
        targets.remove(i);
    }
    q
}

pub fn run_direction(input: &SweepInput, direction: Direction, seed: u64) -> Result<Vec<Landing>> {
    let n = input.video.frame_count();
    let frames: Vec<usize> = match direction {
        Direction::Forward => (1..=n).collect(),
        Direction::Backward => (1..=n).rev().collect(),
    };
    // origin endpoint frame and landing endpoint frame of each tracklet
    let origin_frame = |t: &Tracklet| match direction {
        Direction::Forward => t.end(),
        Direction::Backward => t.start(),
    };
    let landing_state = |t: &Tracklet| match direction {
        Direction::Forward => t.states[0],
        Direction::Backward => t.states[t.states.len() - 1],
    };
    let mut psi: Vec<ActiveTarget> = Vec::new();
    let mut landings = Vec::new();
    for w in frames.windows(2) {
        let (prev, t) = (w[0], w[1]);
        for tr in input.tracklets.iter().filter(|tr| origin_frame(tr) == prev) {
            let s = origin_state(tr, direction);
            psi.push(ActiveTarget {
                origin: (tr.id, direction.origin()),
                pose: s.pose(),
                templates: Templates::from_tracklet(tr, input.cfg.templates, input.video, &input.shape)?,
                age: 0,
                cumulative_fitness: 0.0,
            });
        }
        if psi.is_empty() {
            continue;
        }
        let present: Vec<&Tracklet> = input.tracklets.iter().filter(|tr| tr.covers(t)).collect();
        let unclaimed = claim_foreground(&input.masks[t - 1], present.iter().map(|tr| tr.state(t).expect("covers").pose()));
        let frame = input.video.frame(t)?;
        let ctx = GaContext {
            frame: &frame,
            unclaimed: &unclaimed,
            shape: &input.shape,
            stats: &input.stats,
            motion: &input.motion,
            cfg: input.cfg,
        };
        let mut r = rng::stream(seed, &[direction.label(), t as u64]);
        let stepped = ga_step(&psi, &ctx, &mut r);
        for (target, (pose, fit)) in psi.iter_mut().zip(stepped) {
            target.pose = pose;
            target.age += 1;
            target.cumulative_fitness += fit;
        }
        let arriving: Vec<&Tracklet> = input.tracklets.iter().filter(|tr| landing_state(tr).frame == t).collect();
        psi.retain(|target| {
            let nearest = arriving
                .iter()
                .filter(|tr| tr.id != target.origin.0)
                .map(|tr| (landing_state(tr).center.dist(target.pose.center), tr.id))
                .filter(|&(d, _)| d <= input.land_dist)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            match nearest {
                Some((_, to)) => {
                    landings.push(Landing {
                        direction,
                        from: target.origin.0,
                        to,
                        frame: t,
                    });
                    false
                }
                None => true,
            }
        });
        prune_targets(&mut psi, present.len(), input.omega_cap, input.cfg.prune_slack);
    }
    Ok(landings)
}

fn origin_state(t: &Tracklet, direction: Direction) -> crate::tracklets::TrackState {
    match direction {
        Direction::Forward => t.states[t.states.len() - 1],
        Direction::Backward => t.states[0],
    }
}
