use thiserror::Error;

use crate::evaluation::EvalError;
use crate::features::FeatureError;
use crate::imbalance::OversampleError;
use crate::models::ModelError;
use crate::preprocess::PreprocessError;
use crate::record_io::RecordError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of failures, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Oversample(#[from] OversampleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("patient {id}: {source}")]
    Patient { id: String, source: Box<Error> },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Patient { source, .. } => source.kind(),
            Error::Record(RecordError::Io { .. }) => ErrorKind::Io,
            Error::Model(ModelError::SingularCovariance) => ErrorKind::Numeric,
            Error::Model(ModelError::Json(_)) => ErrorKind::Data,
            Error::Eval(EvalError::Model(ModelError::SingularCovariance)) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
