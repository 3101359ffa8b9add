//! The per-frame genetic optimisation of a target configuration.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::appearance::{fit_target, DeltaStats, PatchShape, Templates};
use super::fitness::fit_global;
use crate::config::{MatchingConfig, PopulationMean};
use crate::geometry::{axial, axial_diff, axial_mean, Pose};
use crate::media::{BinaryMask, Frame};
use crate::rng::Rng;
use crate::tracklets::Tracklet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Begin,
    End,
}

/// A target being propagated from a tracklet endpoint.
#[derive(Clone, Debug)]
pub struct ActiveTarget {
    pub origin: (u64, Endpoint),
    pub pose: Pose,
    pub templates: Templates,
    pub age: usize,
    pub cumulative_fitness: f64,
}

impl ActiveTarget {
    pub fn score(&self) -> f64 {
        if self.age == 0 {
            0.0
        } else {
            self.cumulative_fitness / self.age as f64
        }
    }
}

/// Frame-to-frame motion deviations used for displacement sampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    /// Per-axis position deviation, pixels.
    pub sigma_pos: f64,
    /// Orientation deviation, radians.
    pub sigma_theta: f64,
}

pub const MIN_SIGMA_POS: f64 = 0.5;
pub const MIN_SIGMA_THETA: f64 = 0.05;

impl Default for MotionStats {
    fn default() -> Self {
        MotionStats {
            sigma_pos: 1.0,
            sigma_theta: 0.1,
        }
    }
}

impl MotionStats {
    /// Root-mean-square displacements between consecutive states.
    pub fn from_tracklets(tracklets: &[Tracklet]) -> Self {
        let (mut sp, mut st, mut n) = (0.0, 0.0, 0usize);
        for t in tracklets {
            for w in t.states.windows(2) {
                let d = w[1].center - w[0].center;
                sp += d.dot(d);
                let a = axial_diff(w[0].orientation, w[1].orientation);
                st += a * a;
                n += 1;
            }
        }
        if n == 0 {
            return MotionStats::default();
        }
        MotionStats {
            sigma_pos: (sp / (2.0 * n as f64)).sqrt().max(MIN_SIGMA_POS),
            sigma_theta: (st / n as f64).sqrt().max(MIN_SIGMA_THETA),
        }
    }

    pub fn perturb(&self, p: &Pose, r: &mut Rng) -> Pose {
        let pos = Normal::new(0.0, self.sigma_pos).expect("positive sigma");
        let ang = Normal::new(0.0, self.sigma_theta).expect("positive sigma");
        let mut q = *p;
        q.center.x += pos.sample(r);
        q.center.y += pos.sample(r);
        q.orientation = axial(q.orientation + ang.sample(r));
        q
    }
}

/// Everything a GA step reads besides the targets themselves.
pub struct GaContext<'a> {
    pub frame: &'a Frame,
    pub unclaimed: &'a BinaryMask,
    pub shape: &'a PatchShape,
    pub stats: &'a DeltaStats,
    pub motion: &'a MotionStats,
    pub cfg: &'a MatchingConfig,
}

#[derive(Clone, Debug)]
struct Member {
    poses: Vec<Pose>,
    fit_t: Vec<f64>,
    fit_g: usize,
}

fn evaluate(poses: Vec<Pose>, targets: &[ActiveTarget], ctx: &GaContext) -> Member {
    let fit_t = poses
        .iter()
        .zip(targets)
        .map(|(p, t)| fit_target(ctx.frame, p, &t.templates, ctx.shape, ctx.stats))
        .collect();
    let fit_g = fit_global(&poses, ctx.unclaimed);
    Member { poses, fit_t, fit_g }
}

fn roulette(pop: &[Member], r: &mut Rng) -> usize {
    let total: usize = pop.iter().map(|m| m.fit_g).sum();
    if total == 0 {
        return r.random_range(0..pop.len());
    }
    let mut x = r.random_range(0..total);
    for (i, m) in pop.iter().enumerate() {
        if x < m.fit_g {
            return i;
        }
        x -= m.fit_g;
    }
    pop.len() - 1
}

/// New poses for every target and the target fitness at each new pose.
pub fn ga_step(targets: &[ActiveTarget], ctx: &GaContext, r: &mut Rng) -> Vec<(Pose, f64)> {
    assert!(!targets.is_empty());
    let n = ctx.cfg.population.max(2);
    let previous: Vec<Pose> = targets.iter().map(|t| t.pose).collect();
    let mut seeds: Vec<Vec<Pose>> = vec![previous.clone()];
    for _ in 1..n {
        seeds.push(previous.iter().map(|p| ctx.motion.perturb(p, r)).collect());
    }
    let mut pop: Vec<Member> = seeds.into_par_iter().map(|p| evaluate(p, targets, ctx)).collect();

    for _ in 0..ctx.cfg.omega_cycles {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| pop[b].fit_g.cmp(&pop[a].fit_g).then(a.cmp(&b)));
        let elites: Vec<Member> = order.iter().take(ctx.cfg.elitism.min(n)).map(|&i| pop[i].clone()).collect();
        let mut children: Vec<Vec<Pose>> = Vec::with_capacity(n - elites.len());
        while children.len() + elites.len() < n {
            let (a, b) = (roulette(&pop, r), roulette(&pop, r));
            let (pa, pb) = (&pop[a], &pop[b]);
            if r.random_bool(ctx.cfg.crossover_prob.clamp(0.0, 1.0)) {
                children.push(
                    (0..targets.len())
                        .map(|i| if pb.fit_t[i] > pa.fit_t[i] { pb.poses[i] } else { pa.poses[i] })
                        .collect(),
                );
            } else {
                let best = if pb.fit_g > pa.fit_g { pb } else { pa };
                children.push(best.poses.iter().map(|p| ctx.motion.perturb(p, r)).collect());
            }
        }
        let mut next = elites;
        next.extend(children.into_par_iter().map(|p| evaluate(p, targets, ctx)).collect::<Vec<_>>());
        pop = next;
    }

    (0..targets.len())
        .map(|i| {
            let pose = population_mean(&pop, i, ctx.cfg.population_mean, &previous[i]);
            let fit = fit_target(ctx.frame, &pose, &targets[i].templates, ctx.shape, ctx.stats);
            (pose, fit)
        })
        .collect()
}

/// Weighted mean of target `i` over the population. W is Fit_T normalised
/// over the population (uniform when every member scores zero).
fn population_mean(pop: &[Member], i: usize, mode: PopulationMean, previous: &Pose) -> Pose {
    let n = pop.len() as f64;
    let total: f64 = pop.iter().map(|m| m.fit_t[i]).sum();
    let w: Vec<f64> = pop
        .iter()
        .map(|m| if total > 0.0 { m.fit_t[i] / total } else { 1.0 / n })
        .collect();
    let raw: Vec<f64> = match mode {
        PopulationMean::Complement => w.iter().map(|x| 1.0 - x).collect(),
        PopulationMean::Fitness => w,
    };
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = if sum > 0.0 {
        raw.iter().map(|x| x / sum).collect()
    } else {
        vec![1.0 / n; pop.len()]
    };
    let mut c = crate::geometry::Point::new(0.0, 0.0);
    for (m, &wj) in pop.iter().zip(&weights) {
        c = c + m.poses[i].center * wj;
    }
    let first = pop[0].poses[i].orientation;
    let theta = if pop.iter().all(|m| m.poses[i].orientation == first) {
        first
    } else {
        axial_mean(pop.iter().zip(&weights).map(|(m, &wj)| (wj, m.poses[i].orientation)))
    };
    Pose::new(c, theta, previous.length, previous.width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::rng;

    fn scene() -> (Frame, BinaryMask, Pose) {
        let truth = Pose::new(Point::new(30.0, 25.0), 0.3, 16.0, 5.0);
        let mut data = vec![60u8; 60 * 50];
        let mut mask = BinaryMask::new(60, 50);
        truth.for_each_pixel(60, 50, |x, y| {
            data[(y * 60 + x) as usize] = 200;
            mask.set(x, y, true);
        });
        (Frame::gray(60, 50, data), mask, truth)
    }

    #[test]
    fn stationary_target_is_found() {
        let (frame, mask, truth) = scene();
        let shape = PatchShape::for_body(16.0, 5.0);
        let tpl = Templates::new(vec![shape.sample(&frame, &truth)]);
        let start = Pose::new(Point::new(31.5, 24.0), 0.3, 16.0, 5.0);
        let target = ActiveTarget {
            origin: (1, Endpoint::End),
            pose: start,
            templates: tpl,
            age: 0,
            cumulative_fitness: 0.0,
        };
        let stats = DeltaStats { mu: 2.0, sigma: 2.0 };
        let motion = MotionStats {
            sigma_pos: 0.7,
            sigma_theta: 0.05,
        };
        let cfg = MatchingConfig::default();
        let ctx = GaContext {
            frame: &frame,
            unclaimed: &mask,
            shape: &shape,
            stats: &stats,
            motion: &motion,
            cfg: &cfg,
        };
        let mut r = rng::stream(3, &[]);
        let out = ga_step(std::slice::from_ref(&target), &ctx, &mut r);
        assert!(out[0].0.center.dist(truth.center) < 1.0, "{:?}", out[0].0.center);
        let mut r2 = rng::stream(3, &[]);
        assert_eq!(ga_step(std::slice::from_ref(&target), &ctx, &mut r2)[0].0, out[0].0);
    }

    #[test]
    fn identical_members_average_to_themselves() {
        let p = Pose::new(Point::new(3.0, 4.0), 0.7, 5.0, 2.0);
        let m = Member {
            poses: vec![p],
            fit_t: vec![0.3],
            fit_g: 4,
        };
        let pop = vec![m.clone(), m.clone(), m];
        for mode in [PopulationMean::Complement, PopulationMean::Fitness] {
            let q = population_mean(&pop, 0, mode, &p);
            assert!(q.center.dist(p.center) < 1e-12);
            assert_eq!(q.orientation, p.orientation);
        }
    }
}
