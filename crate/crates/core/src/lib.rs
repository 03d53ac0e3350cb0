//! Early in-hospital mortality prediction from first-hour heart-rate signals.
//!
//! The crate covers the whole batch pipeline:
//!
//! - [`record_io`]: heart-rate record formats (CSV and the `HRW1` binary
//!   format) and cohort manifests.
//! - [`synth`]: a seeded synthetic CCU cohort generator.
//! - [`preprocess`]: tail truncation, forward fill, trailing moving average,
//!   polyphase FIR resampling and first-hour clipping.
//! - [`features`]: the 12-feature description of a signal and z-score
//!   normalization.
//! - [`imbalance`]: adaptive cluster-weighted minority oversampling.
//! - [`models`]: eight binary classifiers behind one score/predict contract,
//!   plus CART risk and predictor importance.
//! - [`evaluation`]: stratified folds, confusion metrics, ROC and AUC, and
//!   cross-validation.
//! - [`pipeline`]: cohort-level glue from records to a feature table.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod imbalance;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod record_io;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
