//! A random forest of Gini-split classification trees.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { positive: bool },
    Split { feature: u32, threshold: f32, left: u32, right: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn vote(&self, x: &[f32]) -> bool {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { positive } => return *positive,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    /// For every tree, the sorted groups it was trained on.
    pub in_bag: Vec<Vec<u32>>,
}

pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
}

impl RandomForest {
    /// Trains one tree per bootstrap. Bootstraps resample whole groups (all
    /// samples sharing a `groups` value) so that scores can be taken out of
    /// bag per group.
    pub fn train(xs: &[Vec<f32>], ys: &[bool], groups: &[u32], p: &ForestParams, seed: u64) -> RandomForest {
        assert!(!xs.is_empty());
        assert_eq!(xs.len(), ys.len());
        assert_eq!(xs.len(), groups.len());
        let mut distinct: Vec<u32> = groups.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let members: Vec<Vec<usize>> = distinct
            .iter()
            .map(|g| (0..xs.len()).filter(|&i| groups[i] == *g).collect())
            .collect();
        let dim = xs[0].len();
        let mtry = ((dim as f64).sqrt().round() as usize).clamp(1, dim);
        let built: Vec<(Tree, Vec<u32>)> = (0..p.trees)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(seed, &[rng::label::FOREST, k as u64]);
                let mut sample = Vec::with_capacity(xs.len());
                let mut bag = Vec::with_capacity(distinct.len());
                for _ in 0..distinct.len() {
                    let g = r.random_range(0..distinct.len());
                    bag.push(distinct[g]);
                    sample.extend_from_slice(&members[g]);
                }
                bag.sort_unstable();
                bag.dedup();
                let mut nodes = Vec::new();
                grow(xs, ys, &mut sample, 0, p.max_depth, mtry, &mut r, &mut nodes);
                (Tree { nodes }, bag)
            })
            .collect();
        let (trees, in_bag) = built.into_iter().unzip();
        RandomForest { trees, in_bag }
    }

    /// Fraction of trees voting positive.
    pub fn score(&self, x: &[f32]) -> f64 {
        self.trees.iter().filter(|t| t.vote(x)).count() as f64 / self.trees.len() as f64
    }

    /// Fraction of positive votes among trees that did not train on `group`;
    /// all trees when every tree saw it.
    pub fn score_out_of_bag(&self, x: &[f32], group: u32) -> f64 {
        let (mut votes, mut n) = (0, 0);
        for (t, bag) in self.trees.iter().zip(&self.in_bag) {
            if bag.binary_search(&group).is_err() {
                n += 1;
                votes += t.vote(x) as usize;
            }
        }
        if n == 0 {
            self.score(x)
        } else {
            votes as f64 / n as f64
        }
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    xs: &[Vec<f32>],
    ys: &[bool],
    sample: &mut [usize],
    depth: usize,
    max_depth: usize,
    mtry: usize,
    r: &mut rng::Rng,
    nodes: &mut Vec<Node>,
) -> u32 {
    let id = nodes.len() as u32;
    let n = sample.len();
    let pos = sample.iter().filter(|&&i| ys[i]).count();
    nodes.push(Node::Leaf { positive: 2 * pos > n });
    if depth >= max_depth || pos == 0 || pos == n || n < 2 {
        return id;
    }
    let dim = xs[0].len();
    let parent = gini(pos, n);
    let mut best: Option<(f64, u32, f32)> = None;
    let mut order: Vec<(f32, bool)> = Vec::with_capacity(n);
    let features = index::sample(r, dim, mtry);
    for f in features.iter() {
        order.clear();
        order.extend(sample.iter().map(|&i| (xs[i][f], ys[i])));
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0;
        for k in 1..n {
            left_pos += order[k - 1].1 as usize;
            if order[k].0 <= order[k - 1].0 {
                continue;
            }
            let right_pos = pos - left_pos;
            let impurity = (k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(right_pos, n - k)) / n as f64;
            if impurity < parent - 1e-12 && best.is_none_or(|b| impurity < b.0) {
                best = Some((impurity, f as u32, 0.5 * (order[k - 1].0 + order[k].0)));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return id;
    };
    let split = partition(sample, |i| xs[i][feature as usize] <= threshold);
    let (l, rgt) = sample.split_at_mut(split);
    let left = grow(xs, ys, l, depth + 1, max_depth, mtry, r, nodes);
    let right = grow(xs, ys, rgt, depth + 1, max_depth, mtry, r, nodes);
    nodes[id as usize] = Node::Split { feature, threshold, left, right };
    id
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(v: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (mut yes, no): (Vec<usize>, Vec<usize>) = v.iter().partition(|&&i| pred(i));
    let k = yes.len();
    yes.extend(no);
    v.copy_from_slice(&yes);
    k
}

/// Seeded subsample of `0..n` of size at most `cap`, in ascending order.
pub fn subsample(n: usize, cap: usize, r: &mut rng::Rng) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    idx.truncate(cap);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f32>>, Vec<bool>) {
        let mut r = rng::stream(seed, &[]);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c = if pos { 1.0 } else { -1.0 };
            xs.push(vec![c + r.random_range(-0.8..0.8f32), r.random_range(-1.0..1.0f32), r.random_range(-1.0..1.0f32)]);
            ys.push(pos);
        }
        (xs, ys)
    }

    #[test]
    fn separates_and_is_deterministic() {
        let (xs, ys) = toy(200, 1);
        let groups: Vec<u32> = (0..200).map(|i| i / 4).collect();
        let p = ForestParams { trees: 30, max_depth: 8 };
        let f = RandomForest::train(&xs, &ys, &groups, &p, 5);
        let (tx, ty) = toy(100, 2);
        let acc = tx.iter().zip(&ty).filter(|(x, &y)| (f.score(x) > 0.5) == y).count();
        assert!(acc >= 95, "{acc}");
        let g = RandomForest::train(&xs, &ys, &groups, &p, 5);
        assert_eq!(f, g);
    }

    #[test]
    fn out_of_bag_excludes_training_trees() {
        let (xs, ys) = toy(40, 3);
        let groups: Vec<u32> = (0..40).map(|i| i as u32 / 2).collect();
        let f = RandomForest::train(&xs, &ys, &groups, &ForestParams { trees: 20, max_depth: 6 }, 1);
        for g in 0..20 {
            let s = f.score_out_of_bag(&xs[0], g);
            assert!((0.0..=1.0).contains(&s));
        }
        assert!(f.in_bag.iter().all(|b| b.windows(2).all(|w| w[0] < w[1])));
    }
}
