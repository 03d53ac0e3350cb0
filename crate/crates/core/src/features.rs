//! The 12-feature description of a heart-rate signal and per-cohort
//! z-score normalization.

use std::collections::BTreeMap;
use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::preprocess::Signal;

pub const N_FEATURES: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("signal has {0} samples; at least 4 are required")]
    TooShort(usize),
    #[error("signal contains non-finite samples")]
    NonFinite,
    #[error("normalizer needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature table: {0}")]
    MalformedTable(String),
}

/// Feature positions, in output column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Max,
    Min,
    Mean,
    Median,
    Mode,
    Std,
    Variance,
    Range,
    Kurtosis,
    Skewness,
    AveragedPower,
    EnergySpectralDensity,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Max,
        Feature::Min,
        Feature::Mean,
        Feature::Median,
        Feature::Mode,
        Feature::Std,
        Feature::Variance,
        Feature::Range,
        Feature::Kurtosis,
        Feature::Skewness,
        Feature::AveragedPower,
        Feature::EnergySpectralDensity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Max => "max",
            Feature::Min => "min",
            Feature::Mean => "mean",
            Feature::Median => "median",
            Feature::Mode => "mode",
            Feature::Std => "std",
            Feature::Variance => "variance",
            Feature::Range => "range",
            Feature::Kurtosis => "kurtosis",
            Feature::Skewness => "skewness",
            Feature::AveragedPower => "averaged_power",
            Feature::EnergySpectralDensity => "energy_spectral_density",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<&[f64]> for FeatureVector {
    type Error = FeatureError;

    fn try_from(v: &[f64]) -> Result<Self, Self::Error> {
        let arr: [f64; N_FEATURES] = v.try_into().map_err(|_| FeatureError::DimensionMismatch {
            expected: N_FEATURES,
            got: v.len(),
        })?;
        Ok(FeatureVector(arr))
    }
}

/// Mean of squared samples.
pub fn averaged_power(signal: &Signal) -> f64 {
    let s = &signal.samples;
    s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64
}

/// One-sided-free periodogram `P[k] = (dt / N) |X[k]|^2`, `k = 0..N`.
pub fn periodogram(signal: &Signal) -> Vec<f64> {
    let n = signal.len();
    let dt = 1.0 / signal.sampling_rate_hz;
    let mut buf: Vec<Complex<f64>> = signal
        .samples
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| dt / n as f64 * c.norm_sqr()).collect()
}

/// Mean power read off the periodogram: `sum(P) / (N dt)`.
pub fn energy_spectral_density(signal: &Signal) -> f64 {
    let n = signal.len() as f64;
    let dt = 1.0 / signal.sampling_rate_hz;
    periodogram(signal).iter().sum::<f64>() / (n * dt)
}

/// Most frequent value after rounding to whole beats/min; ties go to the
/// smallest value.
pub fn mode(values: &[f64]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.round() as i64).or_default() += 1;
    }
    // BTreeMap iterates ascending, and max_by_key keeps the last maximum, so
    // walk it in reverse to keep the smallest.
    counts
        .iter()
        .rev()
        .max_by_key(|(_, &c)| c)
        .map(|(&v, _)| v as f64)
        .unwrap_or(f64::NAN)
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn extract_features(signal: &Signal) -> Result<FeatureVector, FeatureError> {
    let s = &signal.samples;
    let n = s.len();
    if n < 4 {
        return Err(FeatureError::TooShort(n));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let nf = n as f64;

    let (mean, m2, m3, m4) = if max == min {
        (max, 0.0, 0.0, 0.0)
    } else {
        let mean = s.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in s {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        (mean, m2 / nf, m3 / nf, m4 / nf)
    };
    let variance = m2 * nf / (nf - 1.0);
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };

    let mut v = [0.0; N_FEATURES];
    v[Feature::Max.index()] = max;
    v[Feature::Min.index()] = min;
    v[Feature::Mean.index()] = mean;
    v[Feature::Median.index()] = median(s);
    v[Feature::Mode.index()] = mode(s);
    v[Feature::Std.index()] = variance.sqrt();
    v[Feature::Variance.index()] = variance;
    v[Feature::Range.index()] = max - min;
    v[Feature::Kurtosis.index()] = kurtosis;
    v[Feature::Skewness.index()] = skewness;
    v[Feature::AveragedPower.index()] = averaged_power(signal);
    v[Feature::EnergySpectralDensity.index()] = energy_spectral_density(signal);
    Ok(FeatureVector(v))
}

/// Per-feature centre and scale learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n_features: usize) -> Self {
        Self {
            center: vec![0.0; n_features],
            scale: vec![1.0; n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.center.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = v.0;
        for (j, x) in out.iter_mut().enumerate() {
            *x = (*x - self.center[j]) / self.scale[j];
        }
        FeatureVector(out)
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.n_rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.center[j]) / self.scale[j];
            }
        }
        out
    }
}

/// z-score fit with sample standard deviation; zero-variance columns keep
/// scale 1.
pub fn fit_normalizer(rows: &Matrix) -> Result<Normalizer, FeatureError> {
    let n = rows.n_rows();
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let d = rows.n_cols();
    let mut center = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for j in 0..d {
        let mean = rows.column(j).sum::<f64>() / n as f64;
        let var = rows.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        center[j] = mean;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            scale[j] = sd;
        }
    }
    Ok(Normalizer { center, scale })
}

pub fn apply_normalizer(nz: &Normalizer, v: &FeatureVector) -> FeatureVector {
    nz.apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec(), 1.0)
    }

    #[test]
    fn constant_signal() {
        let f = extract_features(&sig(&[72.0; 10])).unwrap();
        for feat in [
            Feature::Max,
            Feature::Min,
            Feature::Mean,
            Feature::Median,
            Feature::Mode,
        ] {
            assert_eq!(f.get(feat), 72.0, "{feat}");
        }
        for feat in [
            Feature::Std,
            Feature::Variance,
            Feature::Range,
            Feature::Skewness,
            Feature::Kurtosis,
        ] {
            assert_eq!(f.get(feat), 0.0, "{feat}");
        }
        assert_eq!(f.get(Feature::AveragedPower), 72.0 * 72.0);
        assert!((f.get(Feature::EnergySpectralDensity) - 5184.0).abs() < 1e-9);
    }

    #[test]
    fn one_to_four() {
        let f = extract_features(&sig(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(f.get(Feature::Mean), 2.5);
        assert_eq!(f.get(Feature::Median), 2.5);
        assert_eq!(f.get(Feature::Range), 3.0);
        assert!((f.get(Feature::Variance) - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(f.get(Feature::AveragedPower), 7.5);
        // Every rounded value appears once; the smallest wins.
        assert_eq!(f.get(Feature::Mode), 1.0);
    }

    #[test]
    fn too_short() {
        assert_eq!(
            extract_features(&sig(&[1.0, 2.0, 3.0])),
            Err(FeatureError::TooShort(3))
        );
    }

    #[test]
    fn averaged_power_examples() {
        assert_eq!(averaged_power(&sig(&[3.0])), 9.0);
        assert_eq!(averaged_power(&sig(&[1.0, -1.0, 1.0, -1.0])), 1.0);
    }

    #[test]
    fn sinusoid_power_is_half_amplitude_squared() {
        let a = 3.0;
        let n = 256;
        let s: Vec<f64> = (0..n)
            .map(|i| a * (2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).sin())
            .collect();
        let esd = energy_spectral_density(&Signal::new(s, 0.5));
        assert!((esd - a * a / 2.0).abs() < 1e-9);
    }

    #[test]
    fn mode_rounds_and_prefers_smaller() {
        assert_eq!(mode(&[80.2, 79.9, 81.4, 81.1]), 80.0);
        assert_eq!(mode(&[90.0, 90.0, 70.0, 70.0, 85.0]), 70.0);
    }

    #[test]
    fn normalizer_rules() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [2.0, 5.0]]);
        let nz = fit_normalizer(&x).unwrap();
        assert_eq!(nz.center, vec![1.0, 5.0]);
        assert!((nz.scale[0] - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(nz.scale[1], 1.0);
        assert_eq!(
            fit_normalizer(&Matrix::from_rows(&[[1.0]])),
            Err(FeatureError::TooFewRows(1))
        );

        let v = FeatureVector([3.5; N_FEATURES]);
        assert_eq!(Normalizer::identity(N_FEATURES).apply(&v), v);
    }

    proptest! {
        #[test]
        fn normalized_columns_are_standard(rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 2..40)) {
            let x = Matrix::from_rows(&rows);
            let nz = fit_normalizer(&x).unwrap();
            let z = nz.apply_matrix(&x);
            let n = z.n_rows() as f64;
            for j in 0..3 {
                let mean = z.column(j).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                if x.column(j).any(|v| v != x.get(0, j)) {
                    let var = z.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn parseval(s in prop::collection::vec(-300.0..300.0f64, 1..600), rate in 0.1..2.0f64) {
            let sig = Signal::new(s, rate);
            let time = averaged_power(&sig);
            let freq = energy_spectral_density(&sig);
            prop_assert!((time - freq).abs() <= 1e-6 * time.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn invariants_hold(s in prop::collection::vec(20.0..250.0f64, 4..300)) {
            let f = extract_features(&sig(&s)).unwrap();
            prop_assert!(f.get(Feature::Max) >= f.get(Feature::Mean));
            prop_assert!(f.get(Feature::Mean) >= f.get(Feature::Min));
            prop_assert_eq!(f.get(Feature::Range), f.get(Feature::Max) - f.get(Feature::Min));
            let var = f.get(Feature::Variance);
            prop_assert!((f.get(Feature::Std).powi(2) - var).abs() <= 1e-9 * var.max(1e-300));
            prop_assert!(f.0.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn value_features_ignore_order(s in prop::collection::vec(20.0..250.0f64, 4..200), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = s.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = extract_features(&sig(&s)).unwrap();
            let b = extract_features(&sig(&shuffled)).unwrap();
            for feat in &Feature::ALL[..10] {
                let (x, y) = (a.get(*feat), b.get(*feat));
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{} {} {}", feat, x, y);
            }
        }

        #[test]
        fn affine_response(s in prop::collection::vec(20i32..250, 4..200), c in 1i32..6) {
            let base: Vec<f64> = s.iter().map(|&v| v as f64).collect();
            prop_assume!(base.iter().any(|&v| v != base[0]));
            let c = c as f64;
            let scaled: Vec<f64> = base.iter().map(|v| v * c).collect();
            let a = extract_features(&sig(&base)).unwrap();
            let b = extract_features(&sig(&scaled)).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-12);
            use Feature::*;
            for feat in [Max, Min, Mean, Median, Mode, Std, Range] {
                prop_assert!(close(a.get(feat) * c, b.get(feat)), "{}", feat);
            }
            for feat in [Variance, AveragedPower, EnergySpectralDensity] {
                prop_assert!(close(a.get(feat) * c * c, b.get(feat)), "{}", feat);
            }
            for feat in [Skewness, Kurtosis] {
                prop_assert!((a.get(feat) - b.get(feat)).abs() <= 1e-9 * a.get(feat).abs().max(1.0), "{}", feat);
            }
        }
    }
}
