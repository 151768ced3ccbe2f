use std::path::PathBuf;

use thiserror::Error;

use crate::types::SensorId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
///
/// Variants are split into input problems (bad files, bad arguments, data
/// that violates an invariant) and internal/numerical failures; the CLI maps
/// the first group to exit code 1 and the second to exit code 2.
#[derive(Error, Debug)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown sensor `{0}`")]
    UnknownSensor(SensorId),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("road provider could not route {from} -> {to}: {reason}")]
    Provider {
        from: SensorId,
        to: SensorId,
        reason: String,
    },
    #[error("matrix incomplete: unresolved cells for sensors [{}]", .sensors.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))]
    Incomplete { sensors: Vec<SensorId> },
    #[error("ARIMA fit did not converge on any (p, q) candidate; best partial fit: {best}")]
    ArimaNonConvergence { best: Box<crate::stats::ArimaModel> },
    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True when the error was caused by the caller's input rather than by a
    /// numerical or environmental failure.
    pub fn is_input_error(&self) -> bool {
        if let Error::Io { source, .. } = self {
            return source.kind() == std::io::ErrorKind::NotFound;
        }
        matches!(
            self,
            Error::Csv { .. }
                | Error::Json { .. }
                | Error::Validation(_)
                | Error::UnknownSensor(_)
                | Error::Degenerate(_)
                | Error::Shape(_)
                | Error::Incomplete { .. }
                | Error::Provider { .. }
        )
    }
}
