//! Discrete AdaBoost over shallow weighted CART trees.

use serde::{Deserialize, Serialize};

use super::tree::{train_tree_weighted, TreeNode, TreeParams};
use super::{sigmoid, ModelError};
use crate::matrix::Matrix;

/// Floor on the weighted error of a perfect learner, keeping its vote finite.
const MIN_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 60,
            max_depth: 3,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub feature_count: usize,
    pub learners: Vec<TreeNode>,
    pub alphas: Vec<f64>,
    /// Weighted training error of each kept learner.
    pub errors: Vec<f64>,
}

impl BoostedModel {
    /// `sum_t alpha_t h_t(x)` with `h_t` in `{-1, +1}`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.learners
            .iter()
            .zip(&self.alphas)
            .map(|(h, a)| if h.predict(x) { *a } else { -*a })
            .sum()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

pub fn train_boosted_trees(
    x: &Matrix,
    y: &[bool],
    params: &BoostParams,
) -> Result<BoostedModel, ModelError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    super::check_labels(x, y)?;
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        min_gain: 0.0,
        max_features: None,
    };
    let mut w = vec![1.0 / n as f64; n];
    let mut model = BoostedModel {
        feature_count: x.n_cols(),
        learners: Vec::new(),
        alphas: Vec::new(),
        errors: Vec::new(),
    };

    for round in 0..params.rounds {
        let tree = train_tree_weighted(x, y, &w, &tree_params)?;
        let hits: Vec<bool> = x
            .rows()
            .zip(y)
            .map(|(r, &l)| tree.predict(r) == l)
            .collect();
        let err: f64 = w
            .iter()
            .zip(&hits)
            .filter(|(_, &ok)| !ok)
            .map(|(wi, _)| wi)
            .sum();
        if err >= 0.5 {
            log::debug!("boosting stopped at round {round}: weighted error {err:.4} >= 0.5");
            break;
        }
        let perfect = err <= 0.0;
        let eps = err.max(MIN_ERROR);
        let alpha = 0.5 * ((1.0 - eps) / eps).ln();
        model.learners.push(tree);
        model.alphas.push(alpha);
        model.errors.push(eps);
        if perfect {
            break;
        }
        for (wi, &ok) in w.iter_mut().zip(&hits) {
            *wi *= if ok { (-alpha).exp() } else { alpha.exp() };
        }
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
    }
    Ok(model)
}
