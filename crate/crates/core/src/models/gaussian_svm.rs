//! RBF-kernel SVM solved in the dual by SMO.
//!
//! Working-set selection follows the second-order rule of Fan, Chen and Lin
//! (the LIBSVM solver): the maximal violating `i`, then the `j` giving the
//! largest guaranteed decrease of the dual objective. Kernel rows are
//! computed on demand and kept in a bounded FIFO cache.

use std::collections::VecDeque;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelError};
use crate::matrix::{squared_distance, Matrix};

const TAU: f64 = 1e-12;
/// Kernel cache budget per solver.
const CACHE_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSvmParams {
    pub c: f64,
    /// Kernel width; `None` uses `1 / n_features`.
    pub gamma: Option<f64>,
    /// Stop when the maximal KKT violation drops below this.
    pub tol: f64,
    /// Iteration cap in units of the training-set size.
    pub max_passes: usize,
}

impl Default for GaussianSvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_passes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSvmModel {
    pub gamma: f64,
    pub support_vectors: Matrix,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f64>,
    pub rho: f64,
}

impl GaussianSvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .rows()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * (-self.gamma * squared_distance(sv, x)).exp())
            .sum::<f64>()
            - self.rho
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct KernelRows<'a> {
    x: &'a Matrix,
    gamma: f64,
    rows: Vec<Option<Rc<[f64]>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a Matrix, gamma: f64) -> Self {
        let n = x.n_rows();
        let capacity = (CACHE_BYTES / (8 * n.max(1))).max(2);
        Self {
            x,
            gamma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        if let Some(r) = &self.rows[i] {
            return Rc::clone(r);
        }
        let xi = self.x.row(i);
        let r: Rc<[f64]> = self
            .x
            .rows()
            .map(|xt| (-self.gamma * squared_distance(xi, xt)).exp())
            .collect();
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows[old] = None;
            }
        }
        self.order.push_back(i);
        self.rows[i] = Some(Rc::clone(&r));
        r
    }
}

fn resolve_gamma(params: &GaussianSvmParams, d: usize) -> Result<f64, ModelError> {
    let gamma = params.gamma.unwrap_or(1.0 / d.max(1) as f64);
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ModelError::InvalidParams(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(gamma)
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `0 <= a <= C`, `y'a = 0`, with
/// `Q_ij = y_i y_j exp(-gamma |x_i - x_j|^2)`.
pub fn smo_solve(
    x: &Matrix,
    y: &[bool],
    params: &GaussianSvmParams,
) -> Result<SmoSolution, ModelError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    super::check_labels(x, y)?;
    super::check_per_class(y, 1)?;
    if !(params.c > 0.0 && params.c.is_finite()) || params.tol.is_nan() || params.tol <= 0.0 {
        return Err(ModelError::InvalidParams(
            "C and tol must be positive".into(),
        ));
    }
    let gamma = resolve_gamma(params, x.n_cols())?;
    let c = params.c;
    let ys: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    let mut kernel = KernelRows::new(x, gamma);
    // RBF kernel diagonal is exactly 1.
    let qd = 1.0;

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = params.max_passes.saturating_mul(n.max(100));
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        // Select i: maximal -y_t G_t over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if ys[t] > 0.0 {
                alpha[t] < c
            } else {
                alpha[t] > 0.0
            };
            if in_up {
                let v = -ys[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        let ki = kernel.row(i);

        // Select j over I_low by second-order gain.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let in_low = if ys[t] > 0.0 {
                alpha[t] > 0.0
            } else {
                alpha[t] < c
            };
            if !in_low {
                continue;
            }
            let v = ys[t] * grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let grad_diff = gmax + v;
            if grad_diff > 0.0 {
                let mut quad = qd + qd - 2.0 * ki[t];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < params.tol {
            converged = true;
            break;
        }
        let Some(j) = j_sel else {
            converged = true;
            break;
        };
        iterations += 1;
        let kj = kernel.row(j);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = ys[i] * ys[j] * ki[j];
        if ys[i] != ys[j] {
            let mut quad = qd + qd + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd + qd - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        alpha[i] = alpha[i].clamp(0.0, c);
        alpha[j] = alpha[j].clamp(0.0, c);

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += ys[t] * (ys[i] * ki[t] * di + ys[j] * kj[t] * dj);
        }
    }
    if !converged {
        log::debug!("SMO hit the iteration cap ({max_iter}) before reaching tol");
    }

    // rho: mean of y G over free variables, else midpoint of the feasible band.
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum_free += yg;
            n_free += 1;
        } else {
            let at_upper = alpha[t] >= c;
            if (at_upper && ys[t] < 0.0) || (!at_upper && ys[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    Ok(SmoSolution {
        alpha,
        rho,
        iterations,
        converged,
    })
}

pub fn train_gaussian_svm(
    x: &Matrix,
    y: &[bool],
    params: &GaussianSvmParams,
) -> Result<GaussianSvmModel, ModelError> {
    let solution = smo_solve(x, y, params)?;
    let gamma = resolve_gamma(params, x.n_cols())?;
    let mut support_vectors = Matrix::with_cols(x.n_cols());
    let mut coefficients = Vec::new();
    for (i, &a) in solution.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push_row(x.row(i));
            coefficients.push(if y[i] { a } else { -a });
        }
    }
    Ok(GaussianSvmModel {
        gamma,
        support_vectors,
        coefficients,
        rho: solution.rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_xor() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let y = [false, false, true, true];
        let params = GaussianSvmParams {
            c: 10.0,
            gamma: Some(1.0),
            ..Default::default()
        };
        let m = train_gaussian_svm(&x, &y, &params).unwrap();
        for (row, &label) in x.rows().zip(&y) {
            assert_eq!(m.decision(row) > 0.0, label);
        }
    }

    #[test]
    fn duplicated_separable_data() {
        let base = [[-2.0], [-1.5], [-1.0], [1.0], [1.5], [2.0]];
        let mut rows = base.to_vec();
        rows.extend_from_slice(&base);
        let y: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let m = train_gaussian_svm(&Matrix::from_rows(&rows), &y, &GaussianSvmParams::default())
            .unwrap();
        for (row, &label) in rows.iter().zip(&y) {
            assert_eq!(m.decision(row) > 0.0, label);
        }
    }

    #[test]
    fn constraints_hold() {
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.37;
                [t.sin() * 2.0, (t * 1.7).cos()]
            })
            .collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] * r[1] > 0.1).collect();
        let params = GaussianSvmParams {
            c: 2.0,
            gamma: Some(0.8),
            ..Default::default()
        };
        let sol = smo_solve(&Matrix::from_rows(&rows), &y, &params).unwrap();
        assert!(sol.converged);
        let mut balance = 0.0;
        for (a, &label) in sol.alpha.iter().zip(&y) {
            assert!((-1e-6..=2.0 + 1e-6).contains(a));
            balance += if label { *a } else { -*a };
        }
        assert!(balance.abs() < 1e-6);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert!(smo_solve(&x, &[true, true], &GaussianSvmParams::default()).is_err());
    }
}
