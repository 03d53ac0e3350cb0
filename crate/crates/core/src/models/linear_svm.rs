//! Linear SVM trained in the primal with Pegasos subgradient steps.
//!
//! The bias is handled as an extra constant feature and is regularized with
//! the weights. The regularization strength is `lambda = 1 / (C n)`; each
//! epoch visits every row once in a seeded permutation. The returned
//! iterate is the end-of-epoch one (or zero) with the lowest objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelError};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LinearSvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

impl LinearSvmModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn sign(label: bool) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

/// `lambda / 2 * (|w|^2 + b^2) + mean(max(0, 1 - y (w.x + b)))`.
pub fn objective(weights: &[f64], bias: f64, x: &Matrix, y: &[bool], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * (dot(weights, weights) + bias * bias);
    let hinge: f64 = x
        .rows()
        .zip(y)
        .map(|(row, &label)| (1.0 - sign(label) * (dot(weights, row) + bias)).max(0.0))
        .sum();
    reg + hinge / x.n_rows() as f64
}

pub fn train_linear_svm(
    x: &Matrix,
    y: &[bool],
    params: &LinearSvmParams,
) -> Result<LinearSvmModel, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyData);
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(ModelError::InvalidParams(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    let n = x.n_rows();
    let d = x.n_cols();
    let lambda = 1.0 / (params.c * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (vec![0.0; d], 0.0, objective(&w, 0.0, x, y, lambda));
    let mut order: Vec<usize> = (0..n).collect();
    let radius = 1.0 / lambda.sqrt();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let yi = sign(y[i]);
            let row = x.row(i);
            let violated = yi * (dot(&w, row) + b) < 1.0;
            let shrink = 1.0 - eta * lambda;
            for wj in &mut w {
                *wj *= shrink;
            }
            b *= shrink;
            if violated {
                for (wj, xj) in w.iter_mut().zip(row) {
                    *wj += eta * yi * xj;
                }
                b += eta * yi;
            }
            // Optional Pegasos projection onto the ball holding the optimum.
            let norm = (dot(&w, &w) + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                for wj in &mut w {
                    *wj *= s;
                }
                b *= s;
            }
        }
        let obj = objective(&w, b, x, y, lambda);
        if obj < best.2 {
            best = (w.clone(), b, obj);
        }
    }
    let (weights, bias, objective) = best;
    Ok(LinearSvmModel {
        weights,
        bias,
        objective,
    })
}
