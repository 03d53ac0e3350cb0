//! Cohort-level glue: records to preprocessed signals to a feature table.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureError, N_FEATURES};
use crate::matrix::Matrix;
use crate::preprocess::{preprocess_pipeline, PreprocessConfig, Signal};
use crate::record_io::{read_record, CohortManifest, Outcome, RawRecord, RecordError};

/// Feature rows keyed by patient, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub patient_ids: Vec<String>,
    pub outcomes: Vec<Outcome>,
    pub x: Matrix,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    /// Labels with passed-away as `true`.
    pub fn labels(&self) -> Vec<bool> {
        self.outcomes.iter().map(|o| o.is_positive()).collect()
    }

    pub fn header() -> String {
        let mut h = String::from("patient_id,outcome");
        for j in 1..=N_FEATURES {
            let _ = write!(h, ",f{j}");
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header();
        out.push('\n');
        for ((id, outcome), row) in self
            .patient_ids
            .iter()
            .zip(&self.outcomes)
            .zip(self.x.rows())
        {
            out.push_str(id);
            out.push(',');
            out.push_str(outcome.as_str());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> std::result::Result<Self, FeatureError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(FeatureError::TooFewRows(0))?;
        if header.trim() != Self::header() {
            return Err(FeatureError::MalformedTable(format!(
                "unexpected header {header:?}"
            )));
        }
        let mut table = FeatureTable {
            patient_ids: Vec::new(),
            outcomes: Vec::new(),
            x: Matrix::with_cols(N_FEATURES),
        };
        let mut row = Vec::with_capacity(N_FEATURES);
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != N_FEATURES + 2 {
                return Err(FeatureError::MalformedTable(format!(
                    "line {}: expected {} fields",
                    n + 2,
                    N_FEATURES + 2
                )));
            }
            let outcome: Outcome = fields[1].parse().map_err(|e: RecordError| {
                FeatureError::MalformedTable(format!("line {}: {e}", n + 2))
            })?;
            row.clear();
            for f in &fields[2..] {
                let v: f64 = f.parse().map_err(|_| {
                    FeatureError::MalformedTable(format!("line {}: bad number {f:?}", n + 2))
                })?;
                if !v.is_finite() {
                    return Err(FeatureError::NonFinite);
                }
                row.push(v);
            }
            table.patient_ids.push(fields[0].to_string());
            table.outcomes.push(outcome);
            table.x.push_row(&row);
        }
        Ok(table)
    }
}

fn with_patient<T>(id: &str, r: std::result::Result<T, impl Into<Error>>) -> Result<T> {
    r.map_err(|e| Error::Patient {
        id: id.to_string(),
        source: Box::new(e.into()),
    })
}

/// Preprocesses every record in parallel; output order follows the input.
pub fn preprocess_records(records: &[RawRecord], cfg: &PreprocessConfig) -> Result<Vec<Signal>> {
    records
        .par_iter()
        .map(|r| with_patient(&r.patient_id, preprocess_pipeline(r, cfg)))
        .collect()
}

/// Features of already preprocessed signals.
pub fn feature_table(manifest: &CohortManifest, signals: &[Signal]) -> Result<FeatureTable> {
    let rows: Vec<_> = manifest
        .entries
        .par_iter()
        .zip(signals)
        .map(|(e, s)| with_patient(&e.patient_id, extract_features(s)))
        .collect::<Result<_>>()?;
    let mut x = Matrix::with_cols(N_FEATURES);
    for r in &rows {
        x.push_row(r.as_slice());
    }
    Ok(FeatureTable {
        patient_ids: manifest
            .entries
            .iter()
            .map(|e| e.patient_id.clone())
            .collect(),
        outcomes: manifest.entries.iter().map(|e| e.outcome).collect(),
        x,
    })
}

/// Full chain from raw records to features.
pub fn cohort_features(
    manifest: &CohortManifest,
    records: &[RawRecord],
    cfg: &PreprocessConfig,
) -> Result<FeatureTable> {
    let signals = preprocess_records(records, cfg)?;
    feature_table(manifest, &signals)
}

/// Reads every record named by the manifest at `manifest_path`.
pub fn load_records(manifest_path: &Path, manifest: &CohortManifest) -> Result<Vec<RawRecord>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let mut r = read_record(&CohortManifest::resolve(manifest_path, e))?;
            // HRW carries no identity; the manifest is authoritative.
            r.patient_id = e.patient_id.clone();
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record_io::{CareUnit, ManifestEntry};

    #[test]
    fn table_round_trip() {
        let signal = Signal::new(
            (0..200).map(|i| 80.0 + (i as f64 * 0.3).sin()).collect(),
            1.0,
        );
        let manifest = CohortManifest::new(vec![ManifestEntry {
            patient_id: "P1".into(),
            record_path: "r.hrw".into(),
            care_unit: CareUnit::Ccu,
            outcome: Outcome::PassedAway,
        }])
        .unwrap();
        let table = feature_table(&manifest, &[signal]).unwrap();
        let csv = table.to_csv();
        assert!(csv.starts_with("patient_id,outcome,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12\n"));
        assert_eq!(FeatureTable::parse(&csv).unwrap(), table);
        assert!(FeatureTable::parse("patient_id,outcome\n").is_err());
    }
}
