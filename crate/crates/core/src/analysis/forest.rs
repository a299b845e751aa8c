//! Random forest of variance-reduction regression trees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Rng};
use crate::parallel::par_map;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub jobs: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 8,
            min_samples_leaf: 2,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
    /// Total weighted impurity decrease per feature.
    gains: Vec<f64>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: &'a ForestConfig,
    mtry: usize,
    rng: Rng,
    tree: Tree,
}

/// `Σ(y - ȳ)²` from running sums.
fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq - sum * sum / n).max(0.0)
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len() as f64;
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let sum_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let slot = self.tree.nodes.len();
        self.tree.nodes.push(Node::Leaf(sum / n));
        let parent = sse(sum, sum_sq, n);
        if depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_samples_leaf || parent <= 1e-15 {
            return slot;
        }

        let p = self.rows[0].len();
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in self.rng.sample_indices(p, self.mtry) {
            idx.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
            let (mut ls, mut lsq) = (0.0, 0.0);
            for k in 0..idx.len() - 1 {
                let v = self.y[idx[k]];
                ls += v;
                lsq += v * v;
                let nl = k + 1;
                let nr = idx.len() - nl;
                let (x0, x1) = (self.rows[idx[k]][feature], self.rows[idx[k + 1]][feature]);
                if nl < self.cfg.min_samples_leaf || nr < self.cfg.min_samples_leaf || x0 == x1 {
                    continue;
                }
                let gain = parent - sse(ls, lsq, nl as f64) - sse(sum - ls, sum_sq - lsq, nr as f64);
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, (x0 + x1) / 2.0));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return slot;
        };
        self.tree.gains[feature] += gain;
        let cut = partition(idx, |&i| self.rows[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.tree.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Moves elements satisfying `pred` to the front; returns their count.
fn partition(v: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let mut k = 0;
    for i in 0..v.len() {
        if pred(&v[i]) {
            v.swap(i, k);
            k += 1;
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<Tree>,
    importances: Vec<f64>,
}

impl RandomForest {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    /// Mean of per-tree normalized impurity decreases, normalized to sum 1.
    /// All zero when no tree could split (constant target).
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Same forest with the trees in another order.
    pub fn with_tree_order(&self, order: &[usize]) -> Self {
        RandomForest {
            trees: order.iter().map(|&i| self.trees[i].clone()).collect(),
            importances: self.importances.clone(),
        }
    }
}

/// Each tree sees a bootstrap sample and considers `⌊√p⌋` random features
/// per split. Tree `t` draws from its own sub-seed, so the fit does not
/// depend on `cfg.jobs`.
pub fn fit_random_forest(rows: &[Vec<f64>], y: &[f64], cfg: &ForestConfig, seed: u64) -> Result<RandomForest> {
    if cfg.n_trees == 0 {
        return Err(Error::domain("a forest needs at least one tree"));
    }
    if rows.is_empty() || rows.len() != y.len() {
        return Err(Error::domain("forest needs a non-empty table with one target per row"));
    }
    let p = rows[0].len();
    if p == 0 {
        return Err(Error::domain("forest needs at least one feature"));
    }
    let mtry = ((p as f64).sqrt() as usize).clamp(1, p);
    let ids: Vec<u64> = (0..cfg.n_trees as u64).collect();
    let trees = par_map(&ids, cfg.jobs, |&t| {
        let mut rng = Rng::new(derive_seed(seed, t));
        let mut sample: Vec<usize> = (0..rows.len()).map(|_| rng.below(rows.len())).collect();
        let mut b = Builder {
            rows,
            y,
            cfg,
            mtry,
            rng,
            tree: Tree {
                nodes: Vec::new(),
                gains: vec![0.0; p],
            },
        };
        b.grow(&mut sample, 0);
        b.tree
    });

    let mut importances = vec![0.0; p];
    for t in &trees {
        let total: f64 = t.gains.iter().sum();
        if total > 0.0 {
            for (acc, g) in importances.iter_mut().zip(&t.gains) {
                *acc += g / total;
            }
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(RandomForest { trees, importances })
}
