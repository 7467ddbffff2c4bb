use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::StateDict;
use crate::{par, Error, Result};

/// Marks a leaf in [`RegressionTree::feature`].
pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfrConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfrConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(20),
            min_leaf: 2,
            max_features: Some(16),
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.max_features == Some(0) {
            return Err(Error::Config(
                "forest needs n_trees, min_leaf and max_features >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A CART regression tree over multi-output targets, stored as parallel
/// node arrays. Node 0 is the root. Leaves have `feature == LEAF` and
/// their mean target vector in `values[node * outputs..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub outputs: usize,
    pub feature: Vec<u32>,
    pub threshold: Vec<f32>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub values: Vec<f32>,
}

impl RegressionTree {
    pub fn node_count(&self) -> usize {
        self.feature.len()
    }

    /// Samples go left when `x[feature] <= threshold`.
    pub fn predict(&self, x: &[f32]) -> &[f32] {
        let mut n = 0usize;
        while self.feature[n] != LEAF {
            n = if x[self.feature[n] as usize] <= self.threshold[n] {
                self.left[n] as usize
            } else {
                self.right[n] as usize
            };
        }
        &self.values[n * self.outputs..(n + 1) * self.outputs]
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, n: usize) -> usize {
            if t.feature[n] == LEAF {
                0
            } else {
                1 + go(t, t.left[n] as usize).max(go(t, t.right[n] as usize))
            }
        }
        go(self, 0)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let n = self.feature.len();
        let ok = n > 0
            && self.threshold.len() == n
            && self.left.len() == n
            && self.right.len() == n
            && self.values.len() == n * self.outputs
            && (0..n).all(|i| {
                self.feature[i] == LEAF
                    || ((self.feature[i] as usize) < dim
                        && (self.left[i] as usize) > i
                        && (self.left[i] as usize) < n
                        && (self.right[i] as usize) > i
                        && (self.right[i] as usize) < n)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid("malformed regression tree".into()))
        }
    }
}

struct Fit<'a> {
    x: &'a [Vec<f32>],
    y: &'a [Vec<f32>],
    cfg: &'a RfrConfig,
    dim: usize,
    outputs: usize,
    tree: RegressionTree,
}

struct Split {
    feature: usize,
    threshold: f32,
    score: f64,
}

impl Fit<'_> {
    fn push_node(&mut self, idx: &[usize]) -> usize {
        let id = self.tree.feature.len();
        self.tree.feature.push(LEAF);
        self.tree.threshold.push(0.0);
        self.tree.left.push(0);
        self.tree.right.push(0);
        let mut mean = vec![0.0f64; self.outputs];
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(&self.y[i]) {
                *m += *v as f64;
            }
        }
        self.tree
            .values
            .extend(mean.iter().map(|m| (m / idx.len() as f64) as f32));
        id
    }

    fn pure(&self, idx: &[usize]) -> bool {
        let first = &self.y[idx[0]];
        idx.iter().all(|&i| &self.y[i] == first)
    }

    /// Best split over `features` (ascending). Score is
    /// `sum_c (S_L,c^2 / n_L + S_R,c^2 / n_R)`, which is maximal where the
    /// summed squared error of the children is minimal. Strict improvement
    /// keeps the lowest feature index and then the lowest threshold on ties.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<Split> {
        let n = idx.len();
        let c = self.outputs;
        let mut total = vec![0.0f64; c];
        for &i in idx {
            for (t, v) in total.iter_mut().zip(&self.y[i]) {
                *t += *v as f64;
            }
        }
        let mut best: Option<Split> = None;
        let mut order: Vec<(f32, usize)> = Vec::with_capacity(n);
        let mut left = vec![0.0f64; c];
        for &f in features {
            order.clear();
            order.extend(idx.iter().map(|&i| (self.x[i][f], i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            left.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..n - 1 {
                for (l, v) in left.iter_mut().zip(&self.y[order[k].1]) {
                    *l += *v as f64;
                }
                let nl = k + 1;
                let nr = n - nl;
                if order[k].0 == order[k + 1].0 || nl < self.cfg.min_leaf || nr < self.cfg.min_leaf {
                    continue;
                }
                let score: f64 = left
                    .iter()
                    .zip(&total)
                    .map(|(l, t)| l * l / nl as f64 + (t - l) * (t - l) / nr as f64)
                    .sum();
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let (a, b) = (order[k].0, order[k + 1].0);
                    let mut threshold = a + (b - a) * 0.5;
                    if !(threshold >= a && threshold < b) {
                        threshold = a;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.push_node(idx);
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || idx.len() < 2 * self.cfg.min_leaf || self.pure(idx) {
            return id;
        }
        let mut split = None;
        if let Some(m) = self.cfg.max_features.filter(|&m| m < self.dim) {
            let mut feats = sample(rng, self.dim, m).into_vec();
            feats.sort_unstable();
            split = self.best_split(idx, &feats);
        }
        if split.is_none() {
            let all: Vec<usize> = (0..self.dim).collect();
            split = self.best_split(idx, &all);
        }
        let Some(split) = split else { return id };
        let mut mid = 0;
        for k in 0..idx.len() {
            if self.x[idx[k]][split.feature] <= split.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        self.tree.feature[id] = split.feature as u32;
        self.tree.threshold[id] = split.threshold;
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.tree.left[id] = left as u32;
        self.tree.right[id] = right as u32;
        id
    }
}

fn fit_tree(x: &[Vec<f32>], y: &[Vec<f32>], cfg: &RfrConfig, seed: u64) -> RegressionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut idx: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let outputs = y[0].len();
    let mut fit = Fit {
        x,
        y,
        cfg,
        dim: x[0].len(),
        outputs,
        tree: RegressionTree {
            outputs,
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            values: Vec::new(),
        },
    };
    fit.grow(&mut idx, 0, &mut rng);
    fit.tree
}

/// Per-tree seed; each tree's bootstrap and feature draws depend only on
/// the forest seed and the tree index.
fn tree_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_add((t as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Bagged regression trees whose outputs are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct RfrModel {
    pub dim: usize,
    pub outputs: usize,
    pub trees: Vec<RegressionTree>,
}

impl RfrModel {
    /// Fits on soft-label targets. Trees are independent and fitted
    /// concurrently with the `parallel` feature.
    pub fn fit(x: &[Vec<f32>], y: &[Vec<f32>], cfg: &RfrConfig) -> Result<Self> {
        cfg.validate()?;
        if x.is_empty() {
            return Err(Error::Empty("forest training set".into()));
        }
        if x.len() != y.len() {
            return Err(Error::shape("forest samples vs targets", &[x.len()], &[y.len()]));
        }
        let dim = x[0].len();
        let outputs = y[0].len();
        if dim == 0 || outputs == 0 {
            return Err(Error::Empty("forest feature or target dimension".into()));
        }
        if let Some(r) = x.iter().find(|r| r.len() != dim) {
            return Err(Error::shape("forest feature row", &[dim], &[r.len()]));
        }
        if let Some(r) = y.iter().find(|r| r.len() != outputs) {
            return Err(Error::shape("forest target row", &[outputs], &[r.len()]));
        }
        if x.iter().flatten().chain(y.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forest training data".into()));
        }
        let ids: Vec<usize> = (0..cfg.n_trees).collect();
        let trees = par::map(&ids, |_, &t| fit_tree(x, y, cfg, tree_seed(cfg.seed, t)));
        Ok(Self { dim, outputs, trees })
    }

    /// Mean of the leaf vectors reached in every tree.
    pub fn predict(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.dim {
            return Err(Error::shape("forest input", &[self.dim], &[x.len()]));
        }
        let mut acc = vec![0.0f64; self.outputs];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.predict(x)) {
                *a += *v as f64;
            }
        }
        let n = self.trees.len() as f64;
        Ok(acc.iter().map(|a| (a / n) as f32).collect())
    }

    pub fn save_state(&self, dict: &mut StateDict) -> Result<()> {
        dict.push_u32("rfr.meta", &[3], vec![self.dim as u32, self.outputs as u32, self.trees.len() as u32])?;
        for (i, t) in self.trees.iter().enumerate() {
            let n = t.node_count();
            dict.push_u32(format!("rfr.{i}.feature"), &[n], t.feature.clone())?;
            dict.push_f32(format!("rfr.{i}.threshold"), &[n], t.threshold.clone())?;
            dict.push_u32(format!("rfr.{i}.left"), &[n], t.left.clone())?;
            dict.push_u32(format!("rfr.{i}.right"), &[n], t.right.clone())?;
            dict.push_f32(format!("rfr.{i}.values"), &[n, t.outputs], t.values.clone())?;
        }
        Ok(())
    }

    pub fn from_state(dict: &StateDict) -> Result<Self> {
        let (_, meta) = dict.u32("rfr.meta")?;
        let &[dim, outputs, count] = meta else {
            return Err(Error::Invalid("rfr.meta must hold 3 values".into()));
        };
        let (dim, outputs) = (dim as usize, outputs as usize);
        let mut trees = Vec::with_capacity(count as usize);
        for i in 0..count as usize {
            let (shape, feature) = dict.u32(&format!("rfr.{i}.feature"))?;
            let n = shape.iter().product::<usize>();
            let tree = RegressionTree {
                outputs,
                feature: feature.to_vec(),
                threshold: dict.f32(&format!("rfr.{i}.threshold"), &[n])?.to_vec(),
                left: dict.u32(&format!("rfr.{i}.left"))?.1.to_vec(),
                right: dict.u32(&format!("rfr.{i}.right"))?.1.to_vec(),
                values: dict.f32(&format!("rfr.{i}.values"), &[n, outputs])?.to_vec(),
            };
            tree.validate(dim)?;
            trees.push(tree);
        }
        Ok(Self { dim, outputs, trees })
    }
}
