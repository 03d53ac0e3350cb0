//! Eight binary classifiers behind one contract: `score(x)` lies in `[0, 1]`
//! and rises with the evidence for the positive class (`true`, passed away);
//! `predict(x, t)` is `score(x) >= t`.
//!
//! Margin-based models map their decision value through a logistic sigmoid.
//! That keeps the ranking and is not meant as a calibrated probability.

pub mod boosting;
pub mod forest;
pub mod gaussian_svm;
pub mod knn;
pub mod lda;
pub mod linear_svm;
pub mod logistic;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Normalizer;
use crate::matrix::Matrix;

pub use boosting::{BoostParams, BoostedModel};
pub use forest::{ForestModel, ForestParams};
pub use gaussian_svm::{GaussianSvmModel, GaussianSvmParams};
pub use knn::{KnnModel, KnnParams};
pub use lda::{LdaModel, LdaParams};
pub use linear_svm::{LinearSvmModel, LinearSvmParams};
pub use logistic::{LogisticModel, LogisticParams};
pub use tree::{gini, node_risk, predictor_importance, train_tree, TreeNode, TreeParams};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const MODEL_FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data is empty")]
    EmptyData,
    #[error("class fractions must be nonnegative and sum to 1")]
    InvalidDistribution,
    #[error("tree has no branch nodes")]
    NoBranches,
    #[error("pooled covariance is singular even after ridge regularization")]
    SingularCovariance,
    #[error("k = {k} exceeds the {n} training rows")]
    KTooLarge { k: usize, n: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{got} labels for {expected} rows")]
    LabelMismatch { expected: usize, got: usize },
    #[error("each class needs at least {needed} rows")]
    TooFewPerClass { needed: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error("model document: {0}")]
    Json(String),
}

pub(crate) fn check_labels(x: &Matrix, y: &[bool]) -> Result<(), ModelError> {
    if y.len() != x.n_rows() {
        return Err(ModelError::LabelMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_per_class(y: &[bool], needed: usize) -> Result<(), ModelError> {
    let pos = y.iter().filter(|&&v| v).count();
    if pos < needed || y.len() - pos < needed {
        return Err(ModelError::TooFewPerClass { needed });
    }
    Ok(())
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    LinearDiscriminant,
    LogisticRegression,
    LinearSvm,
    GaussianSvm,
    RandomForest,
    BoostedTrees,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::DecisionTree,
        ModelKind::LinearDiscriminant,
        ModelKind::LogisticRegression,
        ModelKind::LinearSvm,
        ModelKind::GaussianSvm,
        ModelKind::RandomForest,
        ModelKind::BoostedTrees,
        ModelKind::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::LinearDiscriminant => "linear_discriminant",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::GaussianSvm => "gaussian_svm",
            ModelKind::RandomForest => "random_forest",
            ModelKind::BoostedTrees => "boosted_trees",
            ModelKind::Knn => "knn",
        }
    }

    /// Whether the fitted model can be read by a clinician.
    pub fn is_transparent(self) -> bool {
        matches!(
            self,
            ModelKind::DecisionTree
                | ModelKind::LinearDiscriminant
                | ModelKind::LogisticRegression
                | ModelKind::LinearSvm
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == t)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

/// A model variant together with its training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelSpec {
    DecisionTree(TreeParams),
    LinearDiscriminant(LdaParams),
    LogisticRegression(LogisticParams),
    LinearSvm(LinearSvmParams),
    GaussianSvm(GaussianSvmParams),
    RandomForest(ForestParams),
    BoostedTrees(BoostParams),
    Knn(KnnParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DecisionTree => ModelSpec::DecisionTree(TreeParams::default()),
            ModelKind::LinearDiscriminant => ModelSpec::LinearDiscriminant(LdaParams::default()),
            ModelKind::LogisticRegression => {
                ModelSpec::LogisticRegression(LogisticParams::default())
            }
            ModelKind::LinearSvm => ModelSpec::LinearSvm(LinearSvmParams::default()),
            ModelKind::GaussianSvm => ModelSpec::GaussianSvm(GaussianSvmParams::default()),
            ModelKind::RandomForest => ModelSpec::RandomForest(ForestParams::default()),
            ModelKind::BoostedTrees => ModelSpec::BoostedTrees(BoostParams::default()),
            ModelKind::Knn => ModelSpec::Knn(KnnParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::DecisionTree(_) => ModelKind::DecisionTree,
            ModelSpec::LinearDiscriminant(_) => ModelKind::LinearDiscriminant,
            ModelSpec::LogisticRegression(_) => ModelKind::LogisticRegression,
            ModelSpec::LinearSvm(_) => ModelKind::LinearSvm,
            ModelSpec::GaussianSvm(_) => ModelKind::GaussianSvm,
            ModelSpec::RandomForest(_) => ModelKind::RandomForest,
            ModelSpec::BoostedTrees(_) => ModelKind::BoostedTrees,
            ModelSpec::Knn(_) => ModelKind::Knn,
        }
    }

    /// Same spec with its random seed (if it has one) replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut spec = self.clone();
        match &mut spec {
            ModelSpec::LinearSvm(p) => p.seed = seed,
            ModelSpec::RandomForest(p) => p.seed = seed,
            _ => {}
        }
        spec
    }

    pub fn train(&self, x: &Matrix, y: &[bool]) -> Result<TrainedModel, ModelError> {
        check_labels(x, y)?;
        if x.is_empty() {
            return Err(ModelError::EmptyData);
        }
        Ok(match self {
            ModelSpec::DecisionTree(p) => TrainedModel::DecisionTree(TreeModel {
                params: p.clone(),
                feature_count: x.n_cols(),
                root: train_tree(x, y, p)?,
            }),
            ModelSpec::LinearDiscriminant(p) => {
                TrainedModel::LinearDiscriminant(lda::train_lda(x, y, p)?)
            }
            ModelSpec::LogisticRegression(p) => {
                TrainedModel::LogisticRegression(logistic::train_logistic(x, y, p)?)
            }
            ModelSpec::LinearSvm(p) => {
                TrainedModel::LinearSvm(linear_svm::train_linear_svm(x, y, p)?)
            }
            ModelSpec::GaussianSvm(p) => {
                TrainedModel::GaussianSvm(gaussian_svm::train_gaussian_svm(x, y, p)?)
            }
            ModelSpec::RandomForest(p) => {
                TrainedModel::RandomForest(forest::train_random_forest(x, y, p)?)
            }
            ModelSpec::BoostedTrees(p) => {
                TrainedModel::BoostedTrees(boosting::train_boosted_trees(x, y, p)?)
            }
            ModelSpec::Knn(p) => TrainedModel::Knn(knn::train_knn(x, y, p)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub params: TreeParams,
    pub feature_count: usize,
    pub root: TreeNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    DecisionTree(TreeModel),
    LinearDiscriminant(LdaModel),
    LogisticRegression(LogisticModel),
    LinearSvm(LinearSvmModel),
    GaussianSvm(GaussianSvmModel),
    RandomForest(ForestModel),
    BoostedTrees(BoostedModel),
    Knn(KnnModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::DecisionTree(_) => ModelKind::DecisionTree,
            TrainedModel::LinearDiscriminant(_) => ModelKind::LinearDiscriminant,
            TrainedModel::LogisticRegression(_) => ModelKind::LogisticRegression,
            TrainedModel::LinearSvm(_) => ModelKind::LinearSvm,
            TrainedModel::GaussianSvm(_) => ModelKind::GaussianSvm,
            TrainedModel::RandomForest(_) => ModelKind::RandomForest,
            TrainedModel::BoostedTrees(_) => ModelKind::BoostedTrees,
            TrainedModel::Knn(_) => ModelKind::Knn,
        }
    }

    pub fn feature_count(&self) -> usize {
        match self {
            TrainedModel::DecisionTree(m) => m.feature_count,
            TrainedModel::LinearDiscriminant(m) => m.weights.len(),
            TrainedModel::LogisticRegression(m) => m.weights.len(),
            TrainedModel::LinearSvm(m) => m.weights.len(),
            TrainedModel::GaussianSvm(m) => m.support_vectors.n_cols(),
            TrainedModel::RandomForest(m) => m.feature_count,
            TrainedModel::BoostedTrees(m) => m.feature_count,
            TrainedModel::Knn(m) => m.x.n_cols(),
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        let expected = self.feature_count();
        if x.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        Ok(match self {
            TrainedModel::DecisionTree(m) => m.root.positive_fraction(x),
            TrainedModel::LinearDiscriminant(m) => m.score(x),
            TrainedModel::LogisticRegression(m) => m.score(x),
            TrainedModel::LinearSvm(m) => m.score(x),
            TrainedModel::GaussianSvm(m) => m.score(x),
            TrainedModel::RandomForest(m) => m.score(x),
            TrainedModel::BoostedTrees(m) => m.score(x),
            TrainedModel::Knn(m) => m.score(x),
        })
    }

    pub fn predict(&self, x: &[f64], threshold: f64) -> Result<bool, ModelError> {
        Ok(self.score(x)? >= threshold)
    }

    pub fn score_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        x.rows().map(|r| self.score(r)).collect()
    }
}

/// On-disk form of a trained model: the classifier plus the normalizer that
/// was fitted in front of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
    pub model: TrainedModel,
}

impl ModelDocument {
    pub fn new(model: TrainedModel, normalizer: Option<Normalizer>) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION.to_string(),
            normalizer,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Json(format!(
                "unsupported model version {:?}",
                doc.version
            )));
        }
        Ok(doc)
    }

    /// Scores raw (unnormalized) features.
    pub fn score_raw(&self, x: &[f64]) -> Result<f64, ModelError> {
        match &self.normalizer {
            Some(nz) => {
                if x.len() != nz.n_features() {
                    return Err(ModelError::DimensionMismatch {
                        expected: nz.n_features(),
                        got: x.len(),
                    });
                }
                self.model.score(&nz.apply_row(x))
            }
            None => self.model.score(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.99);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 0.01);
        assert!(sigmoid(-800.0).is_finite());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!(matches!(
            "mlp".parse::<ModelKind>(),
            Err(ModelError::UnknownKind(_))
        ));
    }

    #[test]
    fn threshold_contract() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        let y = [false, false, true, true];
        let m = ModelSpec::default_for(ModelKind::DecisionTree)
            .train(&x, &y)
            .unwrap();
        for row in x.rows() {
            assert!(m.predict(row, 0.0).unwrap());
            assert!(!m.predict(row, 1.0 + 1e-9).unwrap());
        }
        assert!(matches!(
            m.score(&[1.0, 2.0]),
            Err(ModelError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }
}
