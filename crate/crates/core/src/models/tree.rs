//! CART with Gini's diversity index, node risk and predictor importance.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature within the node; samples with `x[feature] <= threshold` go left.
//! Gains within [`TIE_EPS`] of the current best count as ties, and ties keep
//! the lowest feature index and then the smallest threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::matrix::Matrix;

/// Gains closer than this are considered equal.
pub const TIE_EPS: f64 = 1e-12;

/// `1 - sum(p_i^2)`.
pub fn gini(fractions: &[f64]) -> Result<f64, ModelError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty()
        || fractions.iter().any(|p| p.is_nan() || *p < 0.0)
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(ModelError::InvalidDistribution);
    }
    Ok(1.0 - fractions.iter().map(|p| p * p).sum::<f64>())
}

fn binary_gini(positive: f64, total: f64) -> f64 {
    let p = positive / total;
    let q = (total - positive) / total;
    1.0 - p * p - q * q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_gain: f64,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_leaf: 1,
            min_gain: 0.0,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Branch {
        feature: usize,
        threshold: f64,
        gdi: f64,
        node_probability: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        label: bool,
        /// `[negative, positive]` weight fractions.
        fractions: [f64; 2],
        gdi: f64,
        node_probability: f64,
    },
}

impl TreeNode {
    pub fn gdi(&self) -> f64 {
        match self {
            TreeNode::Branch { gdi, .. } | TreeNode::Leaf { gdi, .. } => *gdi,
        }
    }

    pub fn node_probability(&self) -> f64 {
        match self {
            TreeNode::Branch {
                node_probability, ..
            }
            | TreeNode::Leaf {
                node_probability, ..
            } => *node_probability,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Leaf reached by `x`.
    pub fn leaf(&self, x: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Branch {
            feature,
            threshold,
            left,
            right,
            ..
        } = node
        {
            node = if x[*feature] <= *threshold {
                left
            } else {
                right
            };
        }
        node
    }

    /// Positive-class fraction of the leaf reached by `x`.
    pub fn positive_fraction(&self, x: &[f64]) -> f64 {
        match self.leaf(x) {
            TreeNode::Leaf { fractions, .. } => fractions[1],
            TreeNode::Branch { .. } => unreachable!(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        match self.leaf(x) {
            TreeNode::Leaf { label, .. } => *label,
            TreeNode::Branch { .. } => unreachable!(),
        }
    }

    pub fn branch_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Branch { left, right, .. } => 1 + left.branch_count() + right.branch_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Branch { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Branch { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Pre-order walk over every node.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode)) {
        f(self);
        if let TreeNode::Branch { left, right, .. } = self {
            left.visit(f);
            right.visit(f);
        }
    }
}

/// GDI weighted by the share of records reaching the node.
pub fn node_risk(node: &TreeNode) -> f64 {
    node.gdi() * node.node_probability()
}

/// Per-feature sum of `risk(parent) - risk(left) - risk(right)` over the
/// branches splitting on that feature, divided by the number of branches.
pub fn predictor_importance(root: &TreeNode, n_features: usize) -> Result<Vec<f64>, ModelError> {
    let branches = root.branch_count();
    if branches == 0 {
        return Err(ModelError::NoBranches);
    }
    let mut importance = vec![0.0; n_features];
    root.visit(&mut |node| {
        if let TreeNode::Branch {
            feature,
            left,
            right,
            ..
        } = node
        {
            importance[*feature] += node_risk(node) - node_risk(left) - node_risk(right);
        }
    });
    for v in &mut importance {
        *v /= branches as f64;
    }
    Ok(importance)
}

pub fn train_tree(x: &Matrix, y: &[bool], params: &TreeParams) -> Result<TreeNode, ModelError> {
    let weights = vec![1.0; x.n_rows()];
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    train_tree_on(x, y, &weights, rows, params, None)
}

pub fn train_tree_weighted(
    x: &Matrix,
    y: &[bool],
    weights: &[f64],
    params: &TreeParams,
) -> Result<TreeNode, ModelError> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    train_tree_on(x, y, weights, rows, params, None)
}

/// Grows a tree over `rows` (which may repeat indices, as in a bootstrap
/// sample). `rng` draws the per-split feature subsets when
/// `params.max_features` is below the feature count.
pub fn train_tree_on(
    x: &Matrix,
    y: &[bool],
    weights: &[f64],
    mut rows: Vec<usize>,
    params: &TreeParams,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<TreeNode, ModelError> {
    if rows.is_empty() || x.n_rows() == 0 {
        return Err(ModelError::EmptyData);
    }
    super::check_labels(x, y)?;
    if weights.len() != x.n_rows() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(ModelError::InvalidParams(
            "sample weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = rows.iter().map(|&i| weights[i]).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(ModelError::InvalidParams(
            "sample weights sum to zero".into(),
        ));
    }
    let mut builder = Builder {
        x,
        y,
        weights,
        total,
        params,
        rng,
        scratch: Vec::new(),
    };
    Ok(builder.grow(&mut rows, 0))
}

/// Best split of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [bool],
    weights: &'a [f64],
    total: f64,
    params: &'a TreeParams,
    rng: Option<&'a mut ChaCha8Rng>,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> TreeNode {
        let weight: f64 = rows.iter().map(|&i| self.weights[i]).sum();
        let positive: f64 = rows
            .iter()
            .filter(|&&i| self.y[i])
            .map(|&i| self.weights[i])
            .sum();
        let gdi = binary_gini(positive, weight);
        let node_probability = weight / self.total;

        let can_split = depth < self.params.max_depth
            && rows.len() >= 2 * self.params.min_leaf.max(1)
            && gdi > 0.0;
        let split = if can_split {
            self.best_split(rows, weight, positive, gdi)
        } else {
            None
        };
        let Some(split) = split.filter(|s| s.gain > TIE_EPS && s.gain >= self.params.min_gain)
        else {
            let p = positive / weight;
            return TreeNode::Leaf {
                label: p >= 0.5,
                fractions: [1.0 - p, p],
                gdi,
                node_probability,
            };
        };

        let mid = partition(rows, |i| self.x.get(i, split.feature) <= split.threshold);
        let (left_rows, right_rows) = rows.split_at_mut(mid);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        TreeNode::Branch {
            feature: split.feature,
            threshold: split.threshold,
            gdi,
            node_probability,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut all: Vec<usize> = (0..d).collect();
                for k in 0..m.max(1) {
                    let j = rng.random_range(k..d);
                    all.swap(k, j);
                }
                let mut chosen = all[..m.max(1)].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(
        &mut self,
        rows: &[usize],
        weight: f64,
        positive: f64,
        gdi: f64,
    ) -> Option<Split> {
        let min_leaf = self.params.min_leaf.max(1);
        let n = rows.len();
        let mut best: Option<Split> = None;
        for feature in self.candidate_features() {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&i| (self.x.get(i, feature), i)));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut wl, mut pl) = (0.0, 0.0);
            for k in 0..n - 1 {
                let (v, i) = self.scratch[k];
                wl += self.weights[i];
                if self.y[i] {
                    pl += self.weights[i];
                }
                let next = self.scratch[k + 1].0;
                if v == next || k + 1 < min_leaf || n - k - 1 < min_leaf {
                    continue;
                }
                let wr = weight - wl;
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let gain = gdi
                    - (wl / weight) * binary_gini(pl, wl)
                    - (wr / weight) * binary_gini(positive - pl, wr);
                if best.is_none_or(|b| gain > b.gain + TIE_EPS) {
                    best = Some(Split {
                        feature,
                        threshold: midpoint(v, next),
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint of two consecutive distinct values, guaranteed to separate them.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = (lo + hi) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Moves elements satisfying `pred` to the front; returns how many did.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..rows.len() {
        if pred(rows[k]) {
            rows.swap(mid, k);
            mid += 1;
        }
    }
    mid
}
