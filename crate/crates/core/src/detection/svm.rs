//! Linear soft-margin SVM trained by dual coordinate descent on the hinge loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f32>,
    pub bias: f32,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f32]) -> f32 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + self.bias
    }

    pub fn classify(&self, x: &[f32]) -> bool {
        self.decision(x) > 0.0
    }

    pub fn accuracy(&self, xs: &[Vec<f32>], ys: &[bool]) -> f64 {
        let hits = xs.iter().zip(ys).filter(|(x, &y)| self.classify(x) == y).count();
        hits as f64 / xs.len().max(1) as f64
    }

    /// Trains on `xs` with labels `ys` (true = positive). The bias is learned
    /// as the weight of a constant feature 1.
    pub fn train(xs: &[Vec<f32>], ys: &[bool], c: f64, epochs: usize, seed: u64) -> LinearSvm {
        assert_eq!(xs.len(), ys.len());
        let dim = xs.first().map_or(0, Vec::len);
        let mut w = vec![0f64; dim + 1];
        let mut alpha = vec![0f64; xs.len()];
        let qii: Vec<f64> = xs.iter().map(|x| x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() + 1.0).collect();
        let y: Vec<f64> = ys.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut rng = rng::stream(seed, &[rng::label::SVM]);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            let mut max_step = 0f64;
            for &i in &order {
                let x = &xs[i];
                let wx: f64 = x.iter().zip(&w).map(|(&v, wv)| v as f64 * wv).sum::<f64>() + w[dim];
                let g = y[i] * wx - 1.0;
                let pg = if alpha[i] == 0.0 {
                    g.min(0.0)
                } else if alpha[i] == c {
                    g.max(0.0)
                } else {
                    g
                };
                if pg.abs() < 1e-12 {
                    continue;
                }
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let d = (alpha[i] - old) * y[i];
                for (wv, &v) in w.iter_mut().zip(x) {
                    *wv += d * v as f64;
                }
                w[dim] += d;
                max_step = max_step.max(pg.abs());
            }
            if max_step < 1e-4 {
                break;
            }
        }
        LinearSvm {
            weights: w[..dim].iter().map(|&v| v as f32).collect(),
            bias: w[dim] as f32,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn separable_toy_data_is_learned() {
        let mut r = rng::stream(4, &[0]);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..60 {
            let pos = i % 2 == 0;
            let off = if pos { 2.0 } else { -2.0 };
            xs.push(vec![off + r.random_range(-1.0..1.0f32), r.random_range(-3.0..3.0f32), 1.5]);
            ys.push(pos);
        }
        let svm = LinearSvm::train(&xs, &ys, 1.0, 200, 1);
        assert_eq!(svm.accuracy(&xs, &ys), 1.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.2]];
        let ys = vec![true, false, true, false];
        assert_eq!(LinearSvm::train(&xs, &ys, 1.0, 50, 9), LinearSvm::train(&xs, &ys, 1.0, 50, 9));
    }
}
