//! Heart-rate record formats and cohort manifests.
//!
//! Two record encodings are supported:
//!
//! * CSV: a header line `rate_hz=<r>,start_s=<s>,patient=<id>` followed by one
//!   sample per line, with `NaN` marking a missing sample.
//! * HRW: magic `HRW1`, then little-endian `f64` rate, `u64` sample count and
//!   `count` little-endian `f64` samples; a missing sample is a quiet NaN.
//!   HRW carries no patient id or start offset, so those come from the
//!   manifest (and default to empty / zero on parse).
//!
//! Missing samples survive parsing untouched; filling them is the job of
//! [`crate::preprocess`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HRW_MAGIC: &[u8; 4] = b"HRW1";
const QUIET_NAN_BITS: u64 = 0x7FF8_0000_0000_0000;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("sampling rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("record contains no samples")]
    EmptyRecord,
    #[error("non-numeric sample {token:?} on line {line}")]
    NonNumericSample { line: usize, token: String },
    #[error("duplicate patient id {0:?} in manifest")]
    DuplicatePatient(String),
    #[error("unknown care unit {0:?}")]
    UnknownCareUnit(String),
    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RecordError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RecordError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Csv,
    Hrw,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordFormat::Csv => "csv",
            RecordFormat::Hrw => "hrw",
        }
    }

    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("hrw") => RecordFormat::Hrw,
            _ => RecordFormat::Csv,
        }
    }
}

impl FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "hrw" => Ok(RecordFormat::Hrw),
            other => Err(format!("unknown record format {other:?}")),
        }
    }
}

/// A heart-rate record as read from disk, before any cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub patient_id: String,
    /// Beats per minute; `None` marks a missing sample.
    pub samples: Vec<Option<f64>>,
    pub sampling_rate_hz: f64,
    /// Seconds from ICU admission to the first sample.
    pub start_offset_s: f64,
}

impl RawRecord {
    pub fn new(
        patient_id: impl Into<String>,
        samples: Vec<Option<f64>>,
        sampling_rate_hz: f64,
    ) -> Self {
        Self {
            patient_id: patient_id.into(),
            samples,
            sampling_rate_hz,
            start_offset_s: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }
}

pub fn parse_record(bytes: &[u8], format: RecordFormat) -> Result<RawRecord, RecordError> {
    match format {
        RecordFormat::Csv => parse_csv(bytes),
        RecordFormat::Hrw => parse_hrw(bytes),
    }
}

pub fn write_record(record: &RawRecord, format: RecordFormat) -> Vec<u8> {
    match format {
        RecordFormat::Csv => write_csv(record),
        RecordFormat::Hrw => write_hrw(record),
    }
}

pub fn read_record(path: &Path) -> Result<RawRecord, RecordError> {
    let bytes = fs::read(path).map_err(|e| RecordError::io(path, e))?;
    parse_record(&bytes, RecordFormat::from_path(path))
}

pub fn save_record(
    path: &Path,
    record: &RawRecord,
    format: RecordFormat,
) -> Result<(), RecordError> {
    fs::write(path, write_record(record, format)).map_err(|e| RecordError::io(path, e))
}

fn check_rate(rate: f64) -> Result<f64, RecordError> {
    // Also rejects NaN.
    if rate > 0.0 && rate.is_finite() {
        Ok(rate)
    } else {
        Err(RecordError::NonPositiveRate(rate))
    }
}

fn parse_csv(bytes: &[u8]) -> Result<RawRecord, RecordError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| RecordError::MalformedHeader("record is not valid UTF-8".into()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| RecordError::MalformedHeader("missing header line".into()))?;

    let mut rate = None;
    let mut start = None;
    let mut patient = None;
    for field in header.trim().split(',') {
        let (key, value) = field.split_once('=').ok_or_else(|| {
            RecordError::MalformedHeader(format!("expected key=value, got {field:?}"))
        })?;
        let bad_number = || RecordError::MalformedHeader(format!("bad number in {field:?}"));
        match key.trim() {
            "rate_hz" => rate = Some(value.trim().parse::<f64>().map_err(|_| bad_number())?),
            "start_s" => start = Some(value.trim().parse::<f64>().map_err(|_| bad_number())?),
            "patient" => patient = Some(value.to_string()),
            other => {
                return Err(RecordError::MalformedHeader(format!(
                    "unknown header key {other:?}"
                )))
            }
        }
    }
    let rate =
        check_rate(rate.ok_or_else(|| RecordError::MalformedHeader("missing rate_hz".into()))?)?;
    let start = start.unwrap_or(0.0);
    if !(start >= 0.0 && start.is_finite()) {
        return Err(RecordError::MalformedHeader(format!(
            "start_s must be nonnegative, got {start}"
        )));
    }

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let value = if token.eq_ignore_ascii_case("nan") {
            None
        } else {
            match token.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    return Err(RecordError::NonNumericSample {
                        line: i + 2,
                        token: token.to_string(),
                    })
                }
            }
        };
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(RecordError::EmptyRecord);
    }
    Ok(RawRecord {
        patient_id: patient.unwrap_or_default(),
        samples,
        sampling_rate_hz: rate,
        start_offset_s: start,
    })
}

fn write_csv(record: &RawRecord) -> Vec<u8> {
    use std::fmt::Write;

    let mut out = String::with_capacity(16 + record.samples.len() * 8);
    // Rust's float Display is the shortest exact representation, so values
    // round-trip bit for bit.
    let _ = writeln!(
        out,
        "rate_hz={},start_s={},patient={}",
        record.sampling_rate_hz, record.start_offset_s, record.patient_id
    );
    for s in &record.samples {
        match s {
            Some(v) => {
                let _ = writeln!(out, "{v}");
            }
            None => out.push_str("NaN\n"),
        }
    }
    out.into_bytes()
}

fn parse_hrw(bytes: &[u8]) -> Result<RawRecord, RecordError> {
    if bytes.len() < 20 || &bytes[..4] != HRW_MAGIC {
        return Err(RecordError::MalformedHeader(
            "missing HRW1 magic or truncated header".into(),
        ));
    }
    let rate = f64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let rate = check_rate(rate)?;
    let body = &bytes[20..];
    if count == 0 {
        return Err(RecordError::EmptyRecord);
    }
    if (body.len() as u64) != count.saturating_mul(8) {
        return Err(RecordError::MalformedHeader(format!(
            "declared {count} samples but body holds {} bytes",
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            if v.is_nan() {
                None
            } else {
                Some(v)
            }
        })
        .collect();
    Ok(RawRecord {
        patient_id: String::new(),
        samples,
        sampling_rate_hz: rate,
        start_offset_s: 0.0,
    })
}

fn write_hrw(record: &RawRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * record.samples.len());
    out.extend_from_slice(HRW_MAGIC);
    out.extend_from_slice(&record.sampling_rate_hz.to_le_bytes());
    out.extend_from_slice(&(record.samples.len() as u64).to_le_bytes());
    for s in &record.samples {
        let bits = match s {
            Some(v) => v.to_bits(),
            None => QUIET_NAN_BITS,
        };
        out.extend_from_slice(&bits.to_le_bytes());
    }
    out
}

/// The seven care-unit codes used by MIMIC-III transfers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CareUnit {
    Ccu,
    Csru,
    Micu,
    Nicu,
    Nward,
    Sicu,
    Tsicu,
}

impl CareUnit {
    pub const ALL: [CareUnit; 7] = [
        CareUnit::Ccu,
        CareUnit::Csru,
        CareUnit::Micu,
        CareUnit::Nicu,
        CareUnit::Nward,
        CareUnit::Sicu,
        CareUnit::Tsicu,
    ];

    pub fn code(self) -> &'static str {
        match self {
            CareUnit::Ccu => "CCU",
            CareUnit::Csru => "CSRU",
            CareUnit::Micu => "MICU",
            CareUnit::Nicu => "NICU",
            CareUnit::Nward => "NWARD",
            CareUnit::Sicu => "SICU",
            CareUnit::Tsicu => "TSICU",
        }
    }
}

impl fmt::Display for CareUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CareUnit {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        CareUnit::ALL
            .into_iter()
            .find(|u| u.code().eq_ignore_ascii_case(t))
            .ok_or_else(|| RecordError::UnknownCareUnit(s.to_string()))
    }
}

/// In-hospital outcome. `PassedAway` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    PassedAway,
    Survived,
}

impl Outcome {
    pub fn is_positive(self) -> bool {
        self == Outcome::PassedAway
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Outcome::PassedAway
        } else {
            Outcome::Survived
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::PassedAway => "passed_away",
            Outcome::Survived => "survived",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "died" | "passed_away" => Ok(Outcome::PassedAway),
            "survived" | "alive" => Ok(Outcome::Survived),
            _ => Err(RecordError::UnknownOutcome(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub patient_id: String,
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub record_path: PathBuf,
    pub care_unit: CareUnit,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CohortManifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: [&str; 4] = ["patient_id", "record_path", "care_unit", "outcome"];

impl CohortManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, RecordError> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.patient_id.as_str()) {
                return Err(RecordError::DuplicatePatient(e.patient_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, RecordError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes);
        let headers = reader
            .headers()
            .map_err(|e| RecordError::MalformedManifest(e.to_string()))?;
        if headers.iter().map(str::trim).ne(MANIFEST_HEADER) {
            return Err(RecordError::MalformedManifest(format!(
                "expected header {}, got {}",
                MANIFEST_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| RecordError::MalformedManifest(e.to_string()))?;
            entries.push(ManifestEntry {
                patient_id: row[0].trim().to_string(),
                record_path: PathBuf::from(row[1].trim()),
                care_unit: row[2].parse()?,
                outcome: row[3].parse()?,
            });
        }
        Self::new(entries)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(MANIFEST_HEADER)
            .expect("in-memory write");
        for e in &self.entries {
            writer
                .write_record([
                    e.patient_id.as_str(),
                    &e.record_path.to_string_lossy().replace('\\', "/"),
                    e.care_unit.code(),
                    e.outcome.as_str(),
                ])
                .expect("in-memory write");
        }
        writer.into_inner().expect("in-memory flush")
    }

    /// Absolute location of an entry's record given the manifest path.
    pub fn resolve(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        if entry.record_path.is_absolute() {
            entry.record_path.clone()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&entry.record_path)
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<CohortManifest, RecordError> {
    let bytes = fs::read(path).map_err(|e| RecordError::io(path, e))?;
    CohortManifest::parse(&bytes)
}

pub fn save_manifest(path: &Path, manifest: &CohortManifest) -> Result<(), RecordError> {
    fs::write(path, manifest.to_csv()).map_err(|e| RecordError::io(path, e))
}

pub fn filter_care_unit(manifest: &CohortManifest, unit: CareUnit) -> CohortManifest {
    CohortManifest {
        entries: manifest
            .entries
            .iter()
            .filter(|e| e.care_unit == unit)
            .cloned()
            .collect(),
    }
}
