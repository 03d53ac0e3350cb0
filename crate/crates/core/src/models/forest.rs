//! Bagged CART trees with per-split feature subsampling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{train_tree_on, TreeNode, TreeParams};
use super::ModelError;
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 60,
            mtry: None,
            bootstrap: true,
            seed: 0,
            tree: TreeParams {
                max_depth: 64,
                min_leaf: 1,
                min_gain: 0.0,
                max_features: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub feature_count: usize,
    pub trees: Vec<TreeNode>,
    /// Out-of-bag accuracy, when bootstrapping left any row out of every tree.
    pub oob_accuracy: Option<f64>,
}

impl ForestModel {
    /// Fraction of trees voting for the positive class.
    pub fn score(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        votes as f64 / self.trees.len() as f64
    }
}

pub fn train_random_forest(
    x: &Matrix,
    y: &[bool],
    params: &ForestParams,
) -> Result<ForestModel, ModelError> {
    let n = x.n_rows();
    let d = x.n_cols();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    super::check_labels(x, y)?;
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParams(
            "n_trees must be at least 1".into(),
        ));
    }
    let mtry = params
        .mtry
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let tree_params = TreeParams {
        max_features: Some(mtry),
        ..params.tree.clone()
    };
    let weights = vec![1.0; n];

    let fitted: Vec<(TreeNode, Vec<bool>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, t as u64);
            let mut in_bag = vec![!params.bootstrap; n];
            let rows: Vec<usize> = if params.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                (0..n).collect()
            };
            let tree = train_tree_on(x, y, &weights, rows, &tree_params, Some(&mut rng))?;
            Ok((tree, in_bag))
        })
        .collect::<Result<_, ModelError>>()?;

    let (mut correct, mut counted) = (0usize, 0usize);
    for i in 0..n {
        let (mut votes, mut voters) = (0usize, 0usize);
        for (tree, in_bag) in &fitted {
            if !in_bag[i] {
                voters += 1;
                votes += tree.predict(x.row(i)) as usize;
            }
        }
        if voters > 0 {
            counted += 1;
            correct += ((2 * votes >= voters) == y[i]) as usize;
        }
    }
    let oob_accuracy = (counted > 0).then(|| correct as f64 / counted as f64);
    let trees = fitted.into_iter().map(|(t, _)| t).collect();
    Ok(ForestModel {
        feature_count: d,
        trees,
        oob_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::train_tree;

    fn ring() -> (Matrix, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..120 {
            let t = i as f64 * 0.61;
            let r = 0.5 + (i % 4) as f64 * 0.5;
            rows.push([r * t.cos(), r * t.sin(), (i % 7) as f64]);
            y.push(r > 1.2);
        }
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn single_full_tree_matches_cart() {
        let (x, y) = ring();
        let params = ForestParams {
            n_trees: 1,
            mtry: Some(3),
            bootstrap: false,
            seed: 5,
            tree: TreeParams::default(),
        };
        let forest = train_random_forest(&x, &y, &params).unwrap();
        let tree = train_tree(&x, &y, &TreeParams::default()).unwrap();
        assert_eq!(forest.trees[0], tree);
        assert_eq!(forest.oob_accuracy, None);
    }

    #[test]
    fn seeded_forests_are_reproducible() {
        let (x, y) = ring();
        let params = ForestParams {
            n_trees: 12,
            seed: 9,
            ..Default::default()
        };
        let a = train_random_forest(&x, &y, &params).unwrap();
        let b = train_random_forest(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        let c = train_random_forest(&x, &y, &ForestParams { seed: 10, ..params }).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn fits_ring_and_reports_oob() {
        let (x, y) = ring();
        let m = train_random_forest(
            &x,
            &y,
            &ForestParams {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let acc = x
            .rows()
            .zip(&y)
            .filter(|(r, &l)| (m.score(r) >= 0.5) == l)
            .count() as f64
            / y.len() as f64;
        assert!(acc > 0.95);
        let oob = m.oob_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&oob));
        for r in x.rows() {
            assert!((0.0..=1.0).contains(&m.score(r)));
        }
    }
}
