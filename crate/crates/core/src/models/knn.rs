//! k-nearest-neighbour vote under Euclidean distance.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::matrix::{squared_distance, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<bool>,
}

impl KnnModel {
    /// Indices of the `k` nearest training rows, ordered by distance and
    /// then by index.
    pub fn neighbors(&self, q: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .rows()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, q), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.k.min(d.len());
        if k < d.len() {
            d.select_nth_unstable_by(k, cmp);
            d.truncate(k);
        }
        d.sort_unstable_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Fraction of positive labels among the neighbours.
    pub fn score(&self, q: &[f64]) -> f64 {
        let nb = self.neighbors(q);
        nb.iter().filter(|&&i| self.y[i]).count() as f64 / nb.len() as f64
    }
}

pub fn train_knn(x: &Matrix, y: &[bool], params: &KnnParams) -> Result<KnnModel, ModelError> {
    super::check_labels(x, y)?;
    if params.k == 0 {
        return Err(ModelError::InvalidParams("k must be at least 1".into()));
    }
    if x.n_rows() < params.k {
        return Err(ModelError::KTooLarge {
            k: params.k,
            n: x.n_rows(),
        });
    }
    Ok(KnnModel {
        k: params.k,
        x: x.clone(),
        y: y.to_vec(),
    })
}
