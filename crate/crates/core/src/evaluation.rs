//! Stratified k-fold cross-validation, confusion metrics, ROC and AUC.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{fit_normalizer, FeatureError, Normalizer};
use crate::imbalance::{oversample, OversampleConfig, OversampleError};
use crate::matrix::Matrix;
use crate::models::{ModelError, ModelKind, ModelSpec, DEFAULT_THRESHOLD};
use crate::rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{n} samples cannot fill {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oversample(#[from] OversampleError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Confusion counts with passed-away as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Self::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

/// A ratio metric; `degenerate` marks a zero denominator, in which case the
/// value is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub degenerate: bool,
}

impl Metric {
    fn ratio(num: f64, den: f64) -> Self {
        if den > 0.0 {
            Self {
                value: num / den,
                degenerate: false,
            }
        } else {
            Self {
                value: 0.0,
                degenerate: true,
            }
        }
    }
}

pub fn precision(c: &ConfusionCounts) -> Metric {
    Metric::ratio(c.tp as f64, (c.tp + c.fp) as f64)
}

pub fn recall(c: &ConfusionCounts) -> Metric {
    Metric::ratio(c.tp as f64, (c.tp + c.fn_) as f64)
}

/// Harmonic mean of precision and recall.
pub fn f1_from(precision: f64, recall: f64) -> Metric {
    Metric::ratio(2.0 * precision * recall, precision + recall)
}

pub fn f1(c: &ConfusionCounts) -> Metric {
    let (p, r) = (precision(c), recall(c));
    let m = f1_from(p.value, r.value);
    Metric {
        value: m.value,
        degenerate: m.degenerate || p.degenerate || r.degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Test indices of each fold, ascending.
    pub folds: Vec<Vec<usize>>,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn n_samples(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        train.sort_unstable();
        train
    }
}

/// Stratified folds; falls back to unstratified folds (with a warning) when
/// a class has fewer than `k` samples.
pub fn make_folds(y: &[bool], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    make_folds_with(y, k, seed, true)
}

pub fn make_folds_with(
    y: &[bool],
    k: usize,
    seed: u64,
    stratify: bool,
) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFoldCount(k));
    }
    let n = y.len();
    if n < k {
        return Err(EvalError::TooFewSamples { n, k });
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    let mut stratified = stratify;
    if stratify && (n_pos < k || n - n_pos < k) {
        log::warn!("a class has fewer than {k} samples; using unstratified folds");
        stratified = false;
    }
    let groups: Vec<Vec<usize>> = if stratified {
        vec![
            (0..n).filter(|&i| !y[i]).collect(),
            (0..n).filter(|&i| y[i]).collect(),
        ]
    } else {
        vec![(0..n).collect()]
    };
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (g, mut idx) in groups.into_iter().enumerate() {
        idx.shuffle(&mut rng::stream(seed, g as u64));
        for (r, i) in idx.iter().enumerate() {
            folds[(offset + r) % k].push(*i);
        }
        offset = (offset + idx.len()) % k;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, stratified })
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One ROC vertex: the rates obtained by predicting positive for every score
/// `>= threshold`. The origin carries an infinite threshold (`null` in JSON).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    #[serde(with = "inf_as_null")]
    pub threshold: f64,
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            threshold: s,
        });
    }
    Ok(points)
}

/// Trapezoidal area under an ROC polyline.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Balance {
    None,
    Asuwo(OversampleConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub threshold: f64,
    pub normalize: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            stratified: true,
            threshold: DEFAULT_THRESHOLD,
            normalize: true,
        }
    }
}

/// Training and test data of one fold, after normalization and balancing.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFold {
    pub normalizer: Normalizer,
    pub x_train: Matrix,
    pub y_train: Vec<bool>,
    /// Marks synthetic rows of `x_train`.
    pub synthetic: Vec<bool>,
    pub x_test: Matrix,
    pub y_test: Vec<bool>,
}

/// Fits the normalizer and the oversampler on `train` rows only and applies
/// the normalizer to `test` rows.
pub fn prepare_fold(
    x: &Matrix,
    y: &[bool],
    train: &[usize],
    test: &[usize],
    normalize: bool,
    balance: &Balance,
    seed: u64,
) -> Result<PreparedFold, EvalError> {
    let raw_train = x.select_rows(train);
    let normalizer = if normalize {
        fit_normalizer(&raw_train)?
    } else {
        Normalizer::identity(x.n_cols())
    };
    let x_train = normalizer.apply_matrix(&raw_train);
    let y_train: Vec<bool> = train.iter().map(|&i| y[i]).collect();
    let x_test = normalizer.apply_matrix(&x.select_rows(test));
    let y_test: Vec<bool> = test.iter().map(|&i| y[i]).collect();
    let (x_train, y_train, synthetic) = match balance {
        Balance::None => {
            let n = y_train.len();
            (x_train, y_train, vec![false; n])
        }
        Balance::Asuwo(cfg) => {
            let cfg = OversampleConfig {
                seed,
                ..cfg.clone()
            };
            let set = oversample(&x_train, &y_train, &cfg)?;
            (set.x, set.y, set.synthetic)
        }
    };
    Ok(PreparedFold {
        normalizer,
        x_train,
        y_train,
        synthetic,
        x_test,
        y_test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_synthetic: usize,
    pub n_test: usize,
    pub counts: ConfusionCounts,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub threshold: f64,
    pub folds: Vec<FoldResult>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub pooled_counts: ConfusionCounts,
    pub pooled_precision: Metric,
    pub pooled_recall: Metric,
    pub pooled_f1: Metric,
    pub roc_points: Vec<RocPoint>,
    pub auc: f64,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

pub fn cross_validate(
    x: &Matrix,
    y: &[bool],
    spec: &ModelSpec,
    balance: &Balance,
    cfg: &CvConfig,
) -> Result<EvaluationReport, EvalError> {
    if y.len() != x.n_rows() {
        return Err(EvalError::Model(ModelError::LabelMismatch {
            expected: x.n_rows(),
            got: y.len(),
        }));
    }
    if !y.iter().any(|&l| l) || y.iter().all(|&l| l) {
        return Err(EvalError::SingleClass);
    }
    let plan = make_folds_with(y, cfg.k, cfg.seed, cfg.stratified)?;
    let outcomes: Vec<(FoldResult, Vec<f64>)> = (0..plan.k())
        .into_par_iter()
        .map(|f| {
            let fold_seed = rng::derive_seed(cfg.seed, f as u64 + 1);
            let test = plan.test_indices(f);
            let prepared = prepare_fold(
                x,
                y,
                &plan.train_indices(f),
                test,
                cfg.normalize,
                balance,
                fold_seed,
            )?;
            let model = spec
                .with_seed(fold_seed)
                .train(&prepared.x_train, &prepared.y_train)?;
            let scores = model.score_rows(&prepared.x_test)?;
            let counts = ConfusionCounts::from_scores(&scores, &prepared.y_test, cfg.threshold);
            let result = FoldResult {
                fold: f,
                n_train: prepared.y_train.len(),
                n_synthetic: prepared.synthetic.iter().filter(|s| **s).count(),
                n_test: test.len(),
                counts,
                precision: precision(&counts),
                recall: recall(&counts),
                f1: f1(&counts),
            };
            Ok((result, scores))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut pooled_scores = vec![0.0; y.len()];
    let mut folds = Vec::with_capacity(outcomes.len());
    for (result, scores) in outcomes {
        for (&i, s) in plan.test_indices(result.fold).iter().zip(scores) {
            pooled_scores[i] = s;
        }
        folds.push(result);
    }
    let k = folds.len() as f64;
    let mean = |g: fn(&FoldResult) -> f64| folds.iter().map(g).sum::<f64>() / k;
    let pooled_counts = folds
        .iter()
        .fold(ConfusionCounts::default(), |acc, f| acc.add(&f.counts));
    let roc_points = roc_curve(&pooled_scores, y)?;
    let auc = auc(&roc_points);
    Ok(EvaluationReport {
        model: spec.kind(),
        k: plan.k(),
        seed: cfg.seed,
        stratified: plan.stratified,
        threshold: cfg.threshold,
        mean_precision: mean(|f| f.precision.value),
        mean_recall: mean(|f| f.recall.value),
        mean_f1: mean(|f| f.f1.value),
        pooled_precision: precision(&pooled_counts),
        pooled_recall: recall(&pooled_counts),
        pooled_f1: f1(&pooled_counts),
        pooled_counts,
        folds,
        roc_points,
        auc,
    })
}

/// `fpr,tpr,threshold` rows; the origin's infinite threshold is written as
/// `inf`.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in points {
        let t = if p.threshold.is_finite() {
            p.threshold.to_string()
        } else {
            "inf".to_string()
        };
        let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, t);
    }
    out
}

/// One row per model with mean precision, recall and F1 across folds, plus
/// the pooled AUC.
pub fn metrics_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from("classifier,precision,recall,f1_score,auc\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{:.4}",
            r.model, r.mean_precision, r.mean_recall, r.mean_f1, r.auc
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn metric_examples() {
        let c = ConfusionCounts {
            tp: 9,
            fp: 1,
            tn: 5,
            fn_: 0,
        };
        assert!((precision(&c).value - 0.9).abs() < 1e-15);
        assert_eq!(recall(&c).value, 1.0);
        let f = f1_from(0.90, 0.92).value;
        assert!((f - 0.9099).abs() < 1e-4 && (f - 0.91).abs() < 5e-3);
        assert!((f1_from(0.37, 0.37).value - 0.37).abs() < 1e-15);
        let empty = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 4,
            fn_: 0,
        };
        assert_eq!(
            precision(&empty),
            Metric {
                value: 0.0,
                degenerate: true
            }
        );
        assert!(f1(&empty).degenerate);
    }

    #[test]
    fn fold_examples() {
        let y: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let plan = make_folds(&y, 10, 4).unwrap();
        for f in &plan.folds {
            assert_eq!(f.len(), 10);
            assert_eq!(f.iter().filter(|&&i| y[i]).count(), 5);
        }
        let y: Vec<bool> = (0..103).map(|i| i % 7 == 0).collect();
        let plan = make_folds(&y, 10, 4).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(matches!(
            make_folds(&y[..5], 10, 0),
            Err(EvalError::TooFewSamples { n: 5, k: 10 })
        ));
    }

    #[test]
    fn small_class_falls_back_to_unstratified() {
        let y: Vec<bool> = (0..40).map(|i| i < 3).collect();
        let plan = make_folds(&y, 10, 1).unwrap();
        assert!(!plan.stratified);
        assert_eq!(plan.n_samples(), 40);
    }

    #[test]
    fn roc_examples() {
        let pts = roc_curve(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc(&pts), 1.0);
        let pts = roc_curve(&[0.4; 6], &[true, false, true, false, false, false]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(auc(&pts), 0.5);
        assert!(matches!(
            roc_curve(&[0.1, 0.2], &[true, true]),
            Err(EvalError::SingleClass)
        ));
    }

    #[test]
    fn origin_threshold_serializes_as_null() {
        let p = RocPoint {
            fpr: 0.0,
            tpr: 0.0,
            threshold: f64::INFINITY,
        };
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("null"));
        assert_eq!(serde_json::from_str::<RocPoint>(&json).unwrap(), p);
    }

    #[test]
    fn separable_tree_scores_perfectly() {
        let rows: Vec<[f64; 1]> = (0..60)
            .map(|i| [if i >= 45 { 100.0 + i as f64 } else { i as f64 }])
            .collect();
        let y: Vec<bool> = (0..60).map(|i| i >= 45).collect();
        let spec = ModelSpec::default_for(ModelKind::DecisionTree);
        let r = cross_validate(
            &Matrix::from_rows(&rows),
            &y,
            &spec,
            &Balance::None,
            &CvConfig::default(),
        )
        .unwrap();
        assert_eq!(r.mean_f1, 1.0);
        assert_eq!(r.auc, 1.0);
        for f in &r.folds {
            assert_eq!(f.counts.total(), f.n_test);
        }
    }

    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(2..80);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..20) as f64) / 20.0)
                .collect();
            let a = auc(&roc_curve(&scores, &labels).unwrap());
            assert!((a - mann_whitney(&scores, &labels)).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(labels in prop::collection::vec(any::<bool>(), 20..200), seed in any::<u64>()) {
            let plan = make_folds(&labels, 10, seed).unwrap();
            let mut seen = vec![false; labels.len()];
            for f in &plan.folds {
                for &i in f {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|s| *s));
            if plan.stratified {
                let pos = labels.iter().filter(|&&l| l).count();
                for f in &plan.folds {
                    let p = f.iter().filter(|&&i| labels[i]).count() as f64;
                    prop_assert!((p - pos as f64 / 10.0).abs() < 1.0);
                    let q = (f.len() as f64 - p) - (labels.len() - pos) as f64 / 10.0;
                    prop_assert!(q.abs() < 1.0);
                }
            }
        }

        #[test]
        fn auc_is_rank_invariant_and_symmetric(
            pairs in prop::collection::vec((0u8..30, any::<bool>()), 4..80),
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 30.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let base = roc_curve(&scores, &labels).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
            let moved = roc_curve(&mapped, &labels).unwrap();
            prop_assert_eq!(base.len(), moved.len());
            for (a, b) in base.iter().zip(&moved) {
                prop_assert_eq!((a.fpr, a.tpr), (b.fpr, b.tpr));
            }
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let inverted: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            let a = auc(&base);
            prop_assert!((a - auc(&roc_curve(&inverted, &flipped).unwrap())).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
            let last = base.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            prop_assert!(base.windows(2).all(|w| w[0].fpr <= w[1].fpr));
        }
    }
}
