//! Seeded synthetic CCU cohort.
//!
//! Each patient's series is a per-patient baseline plus AR(1) fluctuation,
//! occasional positive bursts (heavy upper tail) and contiguous dropout runs.
//!
//! Both classes draw their baseline from the same two modes, a lower and an
//! upper one, and the mode weights set each class mean. The mode also sets
//! the variability: survivors are calm in the lower mode and agitated in the
//! upper one, while patients who pass away show the reverse (a fast but rigid
//! rhythm, or a slower but unstable one). Outcome is thus an interaction of
//! level and variability. A few axis-aligned thresholds capture it, but no
//! single hyperplane in feature space does.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::record_io::{
    save_manifest, save_record, CareUnit, CohortManifest, ManifestEntry, Outcome, RawRecord,
    RecordError, RecordFormat,
};
use crate::rng::stream;

/// Plausibility bounds on generated beats/min.
pub const MIN_BPM: f64 = 20.0;
pub const MAX_BPM: f64 = 250.0;

const MEAN_MISSING_RUN: f64 = 10.0;
const SPIKE_LEN: std::ops::RangeInclusive<usize> = 5..=20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub ar_coefficient: f64,
    pub noise_sd: f64,
    /// Per-sample probability that a burst starts.
    pub spike_prob: f64,
    pub spike_scale: f64,
    /// Per-sample probability that a dropout run starts.
    pub missing_run_prob: f64,
    /// Distance between the two baseline modes; 0 gives a single mode.
    pub mode_split: f64,
    /// Share of patients in the upper mode.
    pub upper_mode_weight: f64,
    /// Multiplier on `noise_sd` for patients in the upper mode.
    pub upper_mode_noise_factor: f64,
}

impl ClassParams {
    /// Baseline modes `(lower, upper)`; their weighted mean is `baseline_mean`.
    pub fn modes(&self) -> (f64, f64) {
        let w = self.upper_mode_weight;
        (
            self.baseline_mean - self.mode_split * w,
            self.baseline_mean + self.mode_split * (1.0 - w),
        )
    }

    fn validate(&self) -> Result<(), String> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1], got {p}"))
            }
        };
        prob("spike_prob", self.spike_prob)?;
        prob("missing_run_prob", self.missing_run_prob)?;
        prob("upper_mode_weight", self.upper_mode_weight)?;
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(format!(
                "ar_coefficient must lie in [0, 1), got {}",
                self.ar_coefficient
            ));
        }
        for (name, v) in [
            ("baseline_sd", self.baseline_sd),
            ("noise_sd", self.noise_sd),
            ("spike_scale", self.spike_scale),
            ("mode_split", self.mode_split),
            ("upper_mode_noise_factor", self.upper_mode_noise_factor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_survived: usize,
    pub n_passed: usize,
    pub seed: u64,
    pub rates_hz: Vec<f64>,
    pub duration_s: f64,
    pub survived: ClassParams,
    pub passed_away: ClassParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Baseline modes shared by both classes, in beats/min.
const LOWER_MODE: f64 = 80.0;
const UPPER_MODE: f64 = 94.0;

fn class_params(baseline_mean: f64, lower_noise_sd: f64, upper_noise_sd: f64) -> ClassParams {
    let split = UPPER_MODE - LOWER_MODE;
    ClassParams {
        baseline_mean,
        baseline_sd: 2.5,
        ar_coefficient: 0.95,
        noise_sd: lower_noise_sd,
        spike_prob: 0.002,
        spike_scale: 25.0,
        missing_run_prob: 0.002,
        mode_split: split,
        upper_mode_weight: (baseline_mean - LOWER_MODE) / split,
        upper_mode_noise_factor: upper_noise_sd / lower_noise_sd,
    }
}

/// Class sizes from the CCU study cohort; class means from its per-class
/// feature table.
pub fn default_config() -> SynthConfig {
    SynthConfig {
        n_survived: 2614,
        n_passed: 365,
        seed: 7,
        rates_hz: vec![1.0, 0.5, 0.17],
        duration_s: 3600.0,
        survived: class_params(81.92, 0.5, 2.2),
        passed_away: class_params(88.46, 2.2, 0.5),
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rates_hz.is_empty() || self.rates_hz.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err("rates_hz must be a nonempty list of positive rates".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            ));
        }
        self.survived.validate()?;
        self.passed_away.validate()
    }

    pub fn params(&self, outcome: Outcome) -> &ClassParams {
        match outcome {
            Outcome::PassedAway => &self.passed_away,
            Outcome::Survived => &self.survived,
        }
    }
}

pub fn patient_id(index: usize) -> String {
    format!("P{:05}", index + 1)
}

/// Outcomes in manifest order: a seeded shuffle of the class counts.
fn outcomes(cfg: &SynthConfig) -> Vec<Outcome> {
    let mut v = vec![Outcome::Survived; cfg.n_survived];
    v.extend(std::iter::repeat_n(Outcome::PassedAway, cfg.n_passed));
    v.shuffle(&mut stream(cfg.seed, u64::MAX));
    v
}

/// Generates one patient's record. Depends only on `(cfg, index, outcome)`.
pub fn generate_record(cfg: &SynthConfig, index: usize, outcome: Outcome) -> RawRecord {
    let p = cfg.params(outcome);
    let mut rng = stream(cfg.seed, index as u64);
    let rate = cfg.rates_hz[rng.random_range(0..cfg.rates_hz.len())];
    let n = ((cfg.duration_s * rate).floor() as usize).max(1);

    let (lower, upper) = p.modes();
    let in_upper = rng.random::<f64>() < p.upper_mode_weight;
    let (mode, noise_sd) = if in_upper {
        (upper, p.noise_sd * p.upper_mode_noise_factor)
    } else {
        (lower, p.noise_sd)
    };
    let z: f64 = StandardNormal.sample(&mut rng);
    let baseline = mode + p.baseline_sd * z;

    let innovation = Normal::new(0.0, noise_sd).expect("validated sd");
    let run_len = Geometric::new(1.0 / MEAN_MISSING_RUN).expect("valid probability");
    // Start from the stationary distribution so early samples are not damped.
    let stationary_sd = noise_sd / (1.0 - p.ar_coefficient * p.ar_coefficient).sqrt();
    let mut ar = stationary_sd * rng.sample::<f64, _>(StandardNormal);
    let mut spike_left = 0usize;
    let mut spike_amp = 0.0;
    let mut missing_left = 0u64;

    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        ar = p.ar_coefficient * ar + innovation.sample(&mut rng);
        if spike_left == 0 && rng.random::<f64>() < p.spike_prob {
            spike_left = rng.random_range(SPIKE_LEN);
            spike_amp = p.spike_scale * rng.sample::<f64, _>(StandardNormal).abs();
        }
        let spike = if spike_left > 0 {
            spike_left -= 1;
            spike_amp
        } else {
            0.0
        };
        if missing_left == 0 && rng.random::<f64>() < p.missing_run_prob {
            missing_left = run_len.sample(&mut rng) + 1;
        }
        if missing_left > 0 {
            missing_left -= 1;
            samples.push(None);
        } else {
            samples.push(Some((baseline + ar + spike).clamp(MIN_BPM, MAX_BPM)));
        }
    }
    RawRecord {
        patient_id: patient_id(index),
        samples,
        sampling_rate_hz: rate,
        start_offset_s: 0.0,
    }
}

/// Builds the manifest and records. All patients sit in the CCU; record
/// paths are `records/<id>.hrw`, relative to the manifest.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<(CohortManifest, Vec<RawRecord>), String> {
    cfg.validate()?;
    let outcomes = outcomes(cfg);
    let records: Vec<RawRecord> = {
        use rayon::prelude::*;
        outcomes
            .par_iter()
            .enumerate()
            .map(|(i, &o)| generate_record(cfg, i, o))
            .collect()
    };
    let entries = outcomes
        .iter()
        .enumerate()
        .map(|(i, &outcome)| ManifestEntry {
            patient_id: patient_id(i),
            record_path: record_path(&patient_id(i)),
            care_unit: CareUnit::Ccu,
            outcome,
        })
        .collect();
    let manifest = CohortManifest::new(entries).map_err(|e| e.to_string())?;
    Ok((manifest, records))
}

pub fn record_path(patient_id: &str) -> PathBuf {
    PathBuf::from("records").join(format!("{patient_id}.hrw"))
}

/// Writes `manifest.csv` and `records/*.hrw` under `dir`.
pub fn write_cohort(
    dir: &Path,
    manifest: &CohortManifest,
    records: &[RawRecord],
) -> Result<PathBuf, RecordError> {
    let records_dir = dir.join("records");
    fs::create_dir_all(&records_dir).map_err(|e| RecordError::io(&records_dir, e))?;
    for (entry, record) in manifest.entries.iter().zip(records) {
        save_record(&dir.join(&entry.record_path), record, RecordFormat::Hrw)?;
    }
    let manifest_path = dir.join("manifest.csv");
    save_manifest(&manifest_path, manifest)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record_io::{write_record, RecordFormat};

    fn small(n_survived: usize, n_passed: usize) -> SynthConfig {
        SynthConfig {
            n_survived,
            n_passed,
            ..default_config()
        }
    }

    #[test]
    fn defaults() {
        let cfg = default_config();
        assert_eq!(cfg.passed_away.baseline_mean, 88.46);
        assert_eq!(cfg.survived.baseline_mean, 81.92);
        assert_eq!(cfg.rates_hz, vec![1.0, 0.5, 0.17]);
        assert_eq!(cfg.duration_s, 3600.0);
        for (p, mean) in [(&cfg.passed_away, 88.46), (&cfg.survived, 81.92)] {
            let (lo, hi) = p.modes();
            let w = p.upper_mode_weight;
            assert!((w * hi + (1.0 - w) * lo - mean).abs() < 1e-12);
            assert!((lo - 80.0).abs() < 1e-12 && (hi - 94.0).abs() < 1e-12);
        }
        // Variability is reversed between the classes within each mode.
        assert!(cfg.survived.upper_mode_noise_factor > 1.0);
        assert!(cfg.passed_away.upper_mode_noise_factor < 1.0);
    }

    #[test]
    fn class_counts() {
        let (m, r) = generate_cohort(&small(20, 0)).unwrap();
        assert_eq!(m.len(), 20);
        assert_eq!(r.len(), 20);
        assert!(m.entries.iter().all(|e| e.outcome == Outcome::Survived));
    }

    #[test]
    fn deterministic() {
        let cfg = small(15, 5);
        let (m1, r1) = generate_cohort(&cfg).unwrap();
        let (m2, r2) = generate_cohort(&cfg).unwrap();
        assert_eq!(m1, m2);
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(
                write_record(a, RecordFormat::Hrw),
                write_record(b, RecordFormat::Hrw)
            );
        }
        let (_, r3) = generate_cohort(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(r1, r3);
    }

    #[test]
    fn values_are_plausible_and_runs_present() {
        let (_, records) = generate_cohort(&small(40, 40)).unwrap();
        let mut missing = 0;
        for r in &records {
            for v in r.samples.iter().flatten() {
                assert!((MIN_BPM..=MAX_BPM).contains(v));
            }
            missing += r.missing_count();
            assert_eq!(r.len(), (3600.0 * r.sampling_rate_hz).floor() as usize);
        }
        assert!(missing > 0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(1, 1);
        cfg.passed_away.ar_coefficient = 1.0;
        assert!(generate_cohort(&cfg).is_err());
        let mut cfg = small(1, 1);
        cfg.survived.spike_prob = 1.5;
        assert!(generate_cohort(&cfg).is_err());
        let mut cfg = small(1, 1);
        cfg.rates_hz.clear();
        assert!(generate_cohort(&cfg).is_err());
    }
}
