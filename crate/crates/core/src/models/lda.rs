//! Shared-covariance linear discriminant analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_per_class, sigmoid, ModelError};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    /// Ridge added to the diagonal, as a multiple of `trace / d`, when the
    /// pooled covariance is singular or badly conditioned.
    pub ridge: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { ridge: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub ridge_applied: bool,
}

impl LdaModel {
    /// Log posterior odds of the positive class.
    pub fn discriminant(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Posterior probability of the positive class under the fitted
    /// Gaussian model with empirical priors.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.discriminant(x))
    }
}

/// Smallest squared Cholesky pivot, relative to the mean diagonal, below
/// which the pooled covariance is treated as singular.
const CONDITION_FLOOR: f64 = 1e-12;

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let d = a.nrows();
    let mean_diag = a.trace() / d as f64;
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..d)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot.is_nan() || min_pivot <= CONDITION_FLOOR * mean_diag {
        return None;
    }
    Some(chol.solve(b))
}

pub fn train_lda(x: &Matrix, y: &[bool], params: &LdaParams) -> Result<LdaModel, ModelError> {
    check_per_class(y, 2)?;
    let d = x.n_cols();
    let n = x.n_rows();
    let mut mu = [DVector::<f64>::zeros(d), DVector::<f64>::zeros(d)];
    let mut count = [0usize; 2];
    for (row, &label) in x.rows().zip(y) {
        let c = label as usize;
        mu[c] += DVector::from_column_slice(row);
        count[c] += 1;
    }
    for c in 0..2 {
        mu[c] /= count[c] as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (row, &label) in x.rows().zip(y) {
        let diff = DVector::from_column_slice(row) - &mu[label as usize];
        cov.ger(1.0, &diff, &diff, 1.0);
    }
    cov /= (n - 2) as f64;

    let delta = &mu[1] - &mu[0];
    let mut ridge_applied = false;
    let w = match solve_spd(&cov, &delta) {
        Some(w) => w,
        None => {
            ridge_applied = true;
            let mut scale = cov.trace() / d as f64;
            if scale.is_nan() || scale <= 0.0 {
                scale = 1.0;
            }
            let mut ridged = cov.clone();
            for i in 0..d {
                ridged[(i, i)] += params.ridge * scale;
            }
            solve_spd(&ridged, &delta).ok_or(ModelError::SingularCovariance)?
        }
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::SingularCovariance);
    }
    let midpoint = (&mu[1] + &mu[0]) * 0.5;
    let prior_log_odds = (count[1] as f64 / count[0] as f64).ln();
    let bias = -w.dot(&midpoint) + prior_log_odds;
    Ok(LdaModel {
        weights: w.iter().copied().collect(),
        bias,
        ridge_applied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn separated_clouds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let c = i % 2 == 0;
            let centre = if c { 5.0 } else { -5.0 };
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            rows.push([centre + a, centre + b]);
            y.push(c);
        }
        let m = train_lda(&Matrix::from_rows(&rows), &y, &LdaParams::default()).unwrap();
        let correct = rows
            .iter()
            .zip(&y)
            .filter(|(r, &l)| (m.score(&r[..]) >= 0.5) == l)
            .count();
        assert_eq!(correct, rows.len());
    }

    #[test]
    fn mirrored_classes_split_at_origin() {
        let pos = [[1.0, 2.0], [2.0, 0.5], [3.0, 1.5], [1.5, 2.5]];
        let mut rows: Vec<[f64; 2]> = pos.to_vec();
        rows.extend(pos.iter().map(|r| [-r[0], -r[1]]));
        let y = [true, true, true, true, false, false, false, false];
        let m = train_lda(&Matrix::from_rows(&rows), &y, &LdaParams::default()).unwrap();
        assert!((m.score(&[0.0, 0.0]) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn direction_matches_hand_inverse() {
        // Class 0: (0,0), (2,0), (0,2), (2,2) -> mean (1,1)
        // Class 1: (3,1), (5,1), (3,4), (5,4) -> mean (4,2.5)
        // Scatter: class 0 diag(4,4); class 1 diag(4,9); pooled /6 = diag(8/6, 13/6)
        // Sigma^-1 (mu1 - mu0) = (3 * 6/8, 1.5 * 6/13) = (2.25, 0.692307...)
        let rows = [
            [0.0, 0.0],
            [2.0, 0.0],
            [0.0, 2.0],
            [2.0, 2.0],
            [3.0, 1.0],
            [5.0, 1.0],
            [3.0, 4.0],
            [5.0, 4.0],
        ];
        let y = [false, false, false, false, true, true, true, true];
        let m = train_lda(&Matrix::from_rows(&rows), &y, &LdaParams::default()).unwrap();
        assert!((m.weights[0] - 2.25).abs() < 1e-12);
        assert!((m.weights[1] - 9.0 / 13.0).abs() < 1e-12);
        // Equal priors: boundary passes through the midpoint of the means.
        assert!(m.discriminant(&[2.5, 1.75]).abs() < 1e-12);
        assert!(!m.ridge_applied);
    }

    #[test]
    fn collinear_features_fall_back_to_ridge() {
        let rows: Vec<[f64; 3]> = (0..20)
            .map(|i| {
                let v = i as f64 + if i % 3 == 0 { 0.5 } else { 0.0 };
                [v, 2.0 * v, (i % 4) as f64]
            })
            .collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let m = train_lda(&Matrix::from_rows(&rows), &y, &LdaParams::default()).unwrap();
        assert!(m.ridge_applied);
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn needs_two_rows_per_class() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        assert!(matches!(
            train_lda(&x, &[true, false, false], &LdaParams::default()),
            Err(ModelError::TooFewPerClass { needed: 2 })
        ));
    }
}
