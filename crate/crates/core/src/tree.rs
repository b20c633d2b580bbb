//! Greedy binary decision trees: weighted-Gini classification splits for the
//! random forest and gradient/hessian splits for boosting. Trees store plain
//! f64 thresholds and scores regardless of the feature scalar type.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        score: f64,
    },
}

/// Array-backed binary tree; the root is node 0 and children always follow
/// their parent, so child indices strictly increase along any path.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
}

impl DecisionTree {
    /// Routes one feature row to a leaf. Rows go left when
    /// `feature < threshold`.
    pub fn predict_row<T: Scalar>(&self, row: &[T]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { score } => return *score,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature_index].to_f64() < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

fn check_table<T: Scalar>(op: &'static str, x: &Dense<T>, n_rows: usize) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Config(format!("{op}: empty training table")));
    }
    if n_rows != x.rows() {
        return Err(Error::shape(
            op,
            format!("{} targets for {} rows", n_rows, x.rows()),
        ));
    }
    Ok(())
}

fn check_labels(op: &'static str, y: &[i8]) -> Result<()> {
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::Config(format!(
            "{op}: labels must be +1 or -1"
        )));
    }
    Ok(())
}

/// Fits a classification tree on rows labeled ±1. Splits greedily maximize
/// the weighted Gini impurity decrease over a fresh feature subsample at
/// each node (`feature_subsample = None` scans every feature); leaves score
/// the weighted majority class as ±1. Degenerate data yields a single leaf.
pub fn fit_tree<T: Scalar>(
    x: &Dense<T>,
    y: &[i8],
    sample_weights: &[f64],
    max_depth: usize,
    feature_subsample: Option<usize>,
    seed: u64,
) -> Result<DecisionTree> {
    fit_tree_on_rows(
        x,
        y,
        sample_weights,
        &(0..x.rows()).collect::<Vec<_>>(),
        max_depth,
        feature_subsample,
        seed,
    )
}

/// `fit_tree` over an explicit multiset of row indices (bootstrap support).
pub fn fit_tree_on_rows<T: Scalar>(
    x: &Dense<T>,
    y: &[i8],
    sample_weights: &[f64],
    rows: &[usize],
    max_depth: usize,
    feature_subsample: Option<usize>,
    seed: u64,
) -> Result<DecisionTree> {
    check_table("fit_tree", x, y.len())?;
    check_labels("fit_tree", y)?;
    if sample_weights.len() != y.len() {
        return Err(Error::shape(
            "fit_tree",
            format!("{} weights for {} rows", sample_weights.len(), y.len()),
        ));
    }
    if rows.is_empty() {
        return Err(Error::Config("fit_tree: no rows selected".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
        return Err(Error::shape(
            "fit_tree",
            format!("row index {bad} out of range for {} rows", x.rows()),
        ));
    }
    let mut builder = GiniBuilder {
        x,
        y,
        w: sample_weights,
        max_depth,
        n_candidates: feature_subsample
            .map(|m| m.clamp(1, x.cols()))
            .unwrap_or(x.cols()),
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    let mut rows = rows.to_vec();
    builder.build(&mut rows, 0);
    Ok(DecisionTree {
        nodes: builder.nodes,
        max_depth,
    })
}

struct GiniBuilder<'a, T> {
    x: &'a Dense<T>,
    y: &'a [i8],
    w: &'a [f64],
    max_depth: usize,
    n_candidates: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl<T: Scalar> GiniBuilder<'_, T> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let (wp, wn) = rows.iter().fold((0.0, 0.0), |(p, n), &r| {
            if self.y[r] == 1 {
                (p + self.w[r], n)
            } else {
                (p, n + self.w[r])
            }
        });
        let leaf = |nodes: &mut Vec<TreeNode>| {
            nodes.push(TreeNode::Leaf {
                score: if wp >= wn { 1.0 } else { -1.0 },
            });
            nodes.len() - 1
        };
        if depth >= self.max_depth || wp == 0.0 || wn == 0.0 {
            return leaf(&mut self.nodes);
        }
        let Some((feature, threshold)) = self.best_split(rows, wp, wn) else {
            return leaf(&mut self.nodes);
        };
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature_index: feature,
            threshold,
            left: 0,
            right: 0,
        });
        let mid = partition(self.x, rows, feature, threshold);
        let (l_rows, r_rows) = rows.split_at_mut(mid);
        let left = self.build(l_rows, depth + 1);
        let right = self.build(r_rows, depth + 1);
        if let TreeNode::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        if self.n_candidates >= d {
            return (0..d).collect();
        }
        let mut all: Vec<usize> = (0..d).collect();
        let (picked, _) = all.partial_shuffle(&mut self.rng, self.n_candidates);
        let mut picked = picked.to_vec();
        picked.sort_unstable();
        picked
    }

    /// Best `(feature, threshold)` by weighted Gini decrease, scanning
    /// features in ascending index order and thresholds in ascending value
    /// order; the first strict improvement wins ties.
    fn best_split(&mut self, rows: &[usize], wp: f64, wn: f64) -> Option<(usize, f64)> {
        let parent = weighted_gini(wp, wn);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in self.candidate_features() {
            let mut sorted: Vec<(f64, f64, f64)> = rows
                .iter()
                .map(|&r| {
                    let (p, n) = if self.y[r] == 1 {
                        (self.w[r], 0.0)
                    } else {
                        (0.0, self.w[r])
                    };
                    (self.x.get(r, f).to_f64(), p, n)
                })
                .collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut lp, mut ln) = (0.0, 0.0);
            for i in 0..sorted.len() - 1 {
                lp += sorted[i].1;
                ln += sorted[i].2;
                let (a, b) = (sorted[i].0, sorted[i + 1].0);
                if a == b {
                    continue;
                }
                let decrease =
                    parent - weighted_gini(lp, ln) - weighted_gini(wp - lp, wn - ln);
                if decrease > 0.0 && best.map_or(true, |(d, _, _)| decrease > d) {
                    let mut thr = (a + b) / 2.0;
                    // Adjacent floats can collapse the midpoint onto a.
                    if thr <= a {
                        thr = b;
                    }
                    best = Some((decrease, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Weighted Gini impurity scaled by the side's weight:
/// `W · (1 − (wp/W)² − (wn/W)²)`, which simplifies to `2·wp·wn/W`.
fn weighted_gini(wp: f64, wn: f64) -> f64 {
    let total = wp + wn;
    if total == 0.0 {
        0.0
    } else {
        2.0 * wp * wn / total
    }
}

/// Reorders `rows` so indices with `feature < threshold` come first and
/// returns the boundary.
fn partition<T: Scalar>(x: &Dense<T>, rows: &mut [usize], feature: usize, threshold: f64) -> usize {
    let mut mid = 0;
    for i in 0..rows.len() {
        if x.get(rows[i], feature).to_f64() < threshold {
            rows.swap(mid, i);
            mid += 1;
        }
    }
    mid
}

/// Fits a regression tree to per-row gradients and hessians. Split gain is
/// the second-order objective `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)` and
/// each leaf scores `−G/(H+λ)`. Every feature is scanned (no subsampling),
/// so the result is deterministic in the data alone.
pub fn fit_regression_tree<T: Scalar>(
    x: &Dense<T>,
    grad: &[f64],
    hess: &[f64],
    max_depth: usize,
    l2_reg: f64,
) -> Result<DecisionTree> {
    check_table("fit_regression_tree", x, grad.len())?;
    if hess.len() != grad.len() {
        return Err(Error::shape(
            "fit_regression_tree",
            format!("{} hessians for {} gradients", hess.len(), grad.len()),
        ));
    }
    if l2_reg < 0.0 || hess.iter().any(|&h| h < 0.0) {
        return Err(Error::Config(
            "fit_regression_tree: hessians and l2_reg must be nonnegative".into(),
        ));
    }
    let mut builder = RegBuilder {
        x,
        g: grad,
        h: hess,
        max_depth,
        l2: l2_reg,
        nodes: Vec::new(),
    };
    let mut rows: Vec<usize> = (0..x.rows()).collect();
    builder.build(&mut rows, 0);
    Ok(DecisionTree {
        nodes: builder.nodes,
        max_depth,
    })
}

struct RegBuilder<'a, T> {
    x: &'a Dense<T>,
    g: &'a [f64],
    h: &'a [f64],
    max_depth: usize,
    l2: f64,
    nodes: Vec<TreeNode>,
}

impl<T: Scalar> RegBuilder<'_, T> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let (gs, hs) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + self.g[r], h + self.h[r]));
        if depth >= self.max_depth || rows.len() < 2 {
            self.nodes.push(TreeNode::Leaf {
                score: -gs / (hs + self.l2),
            });
            return self.nodes.len() - 1;
        }
        let Some((feature, threshold)) = self.best_split(rows, gs, hs) else {
            self.nodes.push(TreeNode::Leaf {
                score: -gs / (hs + self.l2),
            });
            return self.nodes.len() - 1;
        };
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature_index: feature,
            threshold,
            left: 0,
            right: 0,
        });
        let mid = partition(self.x, rows, feature, threshold);
        let (l_rows, r_rows) = rows.split_at_mut(mid);
        let left = self.build(l_rows, depth + 1);
        let right = self.build(r_rows, depth + 1);
        if let TreeNode::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    fn best_split(&self, rows: &[usize], gs: f64, hs: f64) -> Option<(usize, f64)> {
        let objective = |g: f64, h: f64| g * g / (h + self.l2);
        let parent = objective(gs, hs);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..self.x.cols() {
            let mut sorted: Vec<(f64, f64, f64)> = rows
                .iter()
                .map(|&r| (self.x.get(r, f).to_f64(), self.g[r], self.h[r]))
                .collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..sorted.len() - 1 {
                gl += sorted[i].1;
                hl += sorted[i].2;
                let (a, b) = (sorted[i].0, sorted[i + 1].0);
                if a == b {
                    continue;
                }
                let gain = objective(gl, hl) + objective(gs - gl, hs - hl) - parent;
                if gain > 0.0 && best.map_or(true, |(g, _, _)| gain > g) {
                    let mut thr = (a + b) / 2.0;
                    if thr <= a {
                        thr = b;
                    }
                    best = Some((gain, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
