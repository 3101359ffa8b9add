//! Box-constrained particle swarm minimisation.

use rand::Rng as _;
use rayon::prelude::*;

use crate::config::PsoConfig;
use crate::rng::{self, label};

#[derive(Clone, Debug)]
pub struct PsoResult {
    pub best: Vec<f64>,
    pub best_loss: f64,
    /// Global-best loss after initialisation and after every iteration.
    pub history: Vec<f64>,
}

struct Particle {
    pos: Vec<f64>,
    vel: Vec<f64>,
    best: Vec<f64>,
    best_loss: f64,
    rng: rng::Rng,
}

/// Minimises `f` over the box `[lower, upper]`.
///
/// `seeds` are placed verbatim as the first particles; the rest start
/// uniformly in the box. Every particle draws from its own stream so the
/// result does not depend on evaluation order.
pub fn minimize<F>(lower: &[f64], upper: &[f64], seeds: &[Vec<f64>], cfg: &PsoConfig, seed: u64, f: F) -> PsoResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = lower.len();
    assert_eq!(dim, upper.len());
    let n = cfg.particles.max(seeds.len()).max(1);
    let mut swarm: Vec<Particle> = (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, &[label::PSO, i as u64]);
            let pos: Vec<f64> = match seeds.get(i) {
                Some(s) => s.clone(),
                None => (0..dim).map(|d| uniform(&mut rng, lower[d], upper[d])).collect(),
            };
            let vel = (0..dim)
                .map(|d| {
                    let r = upper[d] - lower[d];
                    uniform(&mut rng, -r, r) * 0.1
                })
                .collect();
            Particle {
                best: pos.clone(),
                pos,
                vel,
                best_loss: f64::INFINITY,
                rng,
            }
        })
        .collect();

    let losses: Vec<f64> = swarm.par_iter().map(|p| f(&p.pos)).collect();
    for (p, l) in swarm.iter_mut().zip(losses) {
        p.best_loss = l;
    }
    let (mut gbest, mut gloss) = global_best(&swarm);
    let mut history = vec![gloss];

    for _ in 0..cfg.iterations {
        for p in swarm.iter_mut() {
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (p.rng.random(), p.rng.random());
                let range = upper[d] - lower[d];
                let v = cfg.inertia * p.vel[d]
                    + cfg.cognitive * r1 * (p.best[d] - p.pos[d])
                    + cfg.social * r2 * (gbest[d] - p.pos[d]);
                p.vel[d] = v.clamp(-range, range);
                p.pos[d] = (p.pos[d] + p.vel[d]).clamp(lower[d], upper[d]);
            }
        }
        let losses: Vec<f64> = swarm.par_iter().map(|p| f(&p.pos)).collect();
        for (p, l) in swarm.iter_mut().zip(losses) {
            if l < p.best_loss {
                p.best_loss = l;
                p.best = p.pos.clone();
            }
        }
        let (b, l) = global_best(&swarm);
        if l < gloss {
            gbest = b;
            gloss = l;
        }
        history.push(gloss);
    }
    PsoResult {
        best: gbest,
        best_loss: gloss,
        history,
    }
}

fn uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Lowest personal best; ties go to the lowest particle index.
fn global_best(swarm: &[Particle]) -> (Vec<f64>, f64) {
    let mut best = 0;
    for (i, p) in swarm.iter().enumerate() {
        if p.best_loss < swarm[best].best_loss {
            best = i;
        }
    }
    (swarm[best].best.clone(), swarm[best].best_loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 1.5) * (v - 1.5)).sum()
    }

    #[test]
    fn finds_sphere_minimum() {
        let r = minimize(&[-5.0; 3], &[5.0; 3], &[], &PsoConfig::default(), 7, sphere);
        assert!(r.best_loss < 1e-4, "{}", r.best_loss);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn seed_particle_is_never_beaten_by_worse() {
        let seeds = vec![vec![1.5, 1.5, 1.5]];
        let r = minimize(&[-5.0; 3], &[5.0; 3], &seeds, &PsoConfig::default(), 1, sphere);
        assert_eq!(r.best_loss, 0.0);
        assert_eq!(r.history[0], 0.0);
    }

    #[test]
    fn deterministic() {
        let a = minimize(&[0.0; 2], &[10.0; 2], &[], &PsoConfig::default(), 3, sphere);
        let b = minimize(&[0.0; 2], &[10.0; 2], &[], &PsoConfig::default(), 3, sphere);
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
    }
}
