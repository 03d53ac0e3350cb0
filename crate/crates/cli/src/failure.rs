use std::fmt;
use std::path::Path;

use vitalsign::ErrorKind;

/// A command failure, carrying the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure::Io(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &Path) -> Self {
        let tag = |m: String| format!("{}: {m}", path.display());
        match self {
            Failure::Usage(m) => Failure::Usage(tag(m)),
            Failure::Io(m) => Failure::Io(tag(m)),
            Failure::Data(m) => Failure::Data(tag(m)),
            Failure::Numeric(m) => Failure::Numeric(tag(m)),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Data(m) | Failure::Numeric(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<vitalsign::Error> for Failure {
    fn from(e: vitalsign::Error) -> Self {
        let msg = e.to_string();
        match e.kind() {
            ErrorKind::Io => Failure::Io(msg),
            ErrorKind::Data => Failure::Data(msg),
            ErrorKind::Numeric => Failure::Numeric(msg),
        }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                vitalsign::Error::from(e).into()
            }
        }
    )*};
}

via_core_error!(
    vitalsign::record_io::RecordError,
    vitalsign::preprocess::PreprocessError,
    vitalsign::features::FeatureError,
    vitalsign::imbalance::OversampleError,
    vitalsign::models::ModelError,
    vitalsign::evaluation::EvalError
);
