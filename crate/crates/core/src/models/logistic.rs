//! L2-regularized logistic regression fitted by gradient descent with
//! Armijo backtracking.
//!
//! Parameters are packed as `[w_0, .., w_{d-1}, b]`. The objective is the
//! mean negative log-likelihood plus `l2 / 2 * |w|^2`; the bias is not
//! penalized.

use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelError};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 2000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub diagnostics: LogisticDiagnostics,
}

impl LogisticModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, x) + self.bias)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear(theta: &[f64], row: &[f64]) -> f64 {
    let d = row.len();
    dot(&theta[..d], row) + theta[d]
}

pub fn objective(theta: &[f64], x: &Matrix, y: &[bool], l2: f64) -> f64 {
    let d = x.n_cols();
    let nll: f64 = x
        .rows()
        .zip(y)
        .map(|(row, &label)| {
            let z = linear(theta, row);
            // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
            if label {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    nll / x.n_rows() as f64 + 0.5 * l2 * theta[..d].iter().map(|w| w * w).sum::<f64>()
}

pub fn gradient(theta: &[f64], x: &Matrix, y: &[bool], l2: f64) -> Vec<f64> {
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let mut g = vec![0.0; d + 1];
    for (row, &label) in x.rows().zip(y) {
        let r = sigmoid(linear(theta, row)) - if label { 1.0 } else { 0.0 };
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    for gj in &mut g {
        *gj /= n;
    }
    for j in 0..d {
        g[j] += l2 * theta[j];
    }
    g
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn train_logistic(
    x: &Matrix,
    y: &[bool],
    params: &LogisticParams,
) -> Result<LogisticModel, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyData);
    }
    if params.l2.is_nan() || params.l2 < 0.0 || params.tol.is_nan() || params.tol <= 0.0 {
        return Err(ModelError::InvalidParams(
            "l2 must be >= 0 and tol > 0".into(),
        ));
    }
    let d = x.n_cols();
    let mut theta = vec![0.0; d + 1];
    let mut f = objective(&theta, x, y, params.l2);
    let mut g = gradient(&theta, x, y, params.l2);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = norm(&g) < params.tol;

    while !converged && iterations < params.max_iter {
        iterations += 1;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        // Let the step grow back after a run of accepted steps.
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            let fc = objective(&candidate, x, y, params.l2);
            if fc <= f - 0.5 * step * g2 {
                theta = candidate;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Step underflowed: already at the floating-point optimum.
            break;
        }
        g = gradient(&theta, x, y, params.l2);
        converged = norm(&g) < params.tol;
    }
    if !converged {
        log::debug!("logistic regression stopped after {iterations} iterations without converging");
    }
    let gradient_norm = norm(&g);
    let bias = theta[d];
    theta.truncate(d);
    Ok(LogisticModel {
        weights: theta,
        bias,
        diagnostics: LogisticDiagnostics {
            iterations,
            converged,
            gradient_norm,
            objective: f,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data_gives_finite_weights() {
        let x = Matrix::from_rows(&[[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]]);
        let y = [false, false, false, true, true, true];
        let m = train_logistic(
            &x,
            &y,
            &LogisticParams {
                l2: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        for (row, &label) in x.rows().zip(&y) {
            assert_eq!(m.score(row) >= 0.5, label);
        }
        assert!(m.diagnostics.converged);
    }

    #[test]
    fn uninformative_features_fall_back_to_prior() {
        // Each x value appears once with each label, plus extra negatives at
        // x = 0 so the prior is 1/3 and the optimum has w = 0.
        let x = Matrix::from_rows(&[[-1.0], [-1.0], [1.0], [1.0], [0.0], [0.0]]);
        let y = [true, false, true, false, false, false];
        let m = train_logistic(&x, &y, &LogisticParams::default()).unwrap();
        assert!(m.weights[0].abs() < 1e-5);
        assert!((m.score(&[0.3]) - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = Matrix::from_rows(&[[0.3, -1.2], [1.5, 0.2], [-0.7, 0.9], [2.2, -0.4]]);
        let y = [true, false, false, true];
        let theta = [0.4, -0.3, 0.1];
        let g = gradient(&theta, &x, &y, 0.05);
        let h = 1e-6;
        for j in 0..3 {
            let mut up = theta;
            let mut down = theta;
            up[j] += h;
            down[j] -= h;
            let fd = (objective(&up, &x, &y, 0.05) - objective(&down, &x, &y, 0.05)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7, "component {j}: {fd} vs {}", g[j]);
        }
    }
}
