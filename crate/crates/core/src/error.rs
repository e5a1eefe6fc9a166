use std::path::PathBuf;

use crate::records::{ChannelKind, StageLabel};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid configuration or arguments.
    Config,
    /// Malformed or inconsistent input data.
    Data,
    /// Non-finite values during training or inference.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("channel absent: {0}")]
    ChannelAbsent(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("bad annotation: line {line}: {detail}")]
    BadAnnotation { line: usize, detail: String },

    #[error("downsampling forbidden: {from_rate} Hz -> {to_rate} Hz")]
    DownsamplingForbidden { from_rate: f64, to_rate: f64 },

    #[error("incompatible rates: {0}")]
    IncompatibleRates(String),

    #[error("degenerate channel: {0} has zero variance")]
    DegenerateChannel(ChannelKind),

    #[error("notch not applicable: sample rate {rate} Hz must exceed {min} Hz")]
    NotchNotApplicable { rate: f64, min: f64 },

    #[error("invalid cutoff: {cutoff} Hz at sample rate {rate} Hz")]
    InvalidCutoff { cutoff: f64, rate: f64 },

    #[error("config out of range: {0}")]
    ConfigOutOfRange(String),

    #[error("bad input shape: {0}")]
    BadInputShape(String),

    #[error("numerical failure{}", context_suffix(.epoch, .batch))]
    NumericalFailure {
        epoch: Option<usize>,
        batch: Option<usize>,
    },

    #[error("class missing from training labels: {0}")]
    ClassMissing(StageLabel),

    #[error("insufficient history: {completed} completed trials, need at least {needed}")]
    InsufficientHistory { completed: usize, needed: usize },

    #[error("insufficient completed trials: {completed} completed, {requested} requested")]
    InsufficientCompletedTrials { completed: usize, requested: usize },

    #[error("label length mismatch: {truth} true labels vs {predicted} predicted")]
    LabelLengthMismatch { truth: usize, predicted: usize },

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(epoch: &Option<usize>, batch: &Option<usize>) -> String {
    match (epoch, batch) {
        (Some(e), Some(b)) => format!(" at epoch {e}, batch {b}"),
        (None, Some(b)) => format!(" in batch {b}"),
        (Some(e), None) => format!(" at epoch {e}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DownsamplingForbidden { .. }
            | Error::NotchNotApplicable { .. }
            | Error::InvalidCutoff { .. }
            | Error::ConfigOutOfRange(_)
            | Error::InsufficientHistory { .. }
            | Error::InsufficientCompletedTrials { .. } => ErrorKind::Config,
            Error::NumericalFailure { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Attaches training-loop coordinates to a numerical failure.
    pub fn with_batch_context(self, epoch: usize, batch: usize) -> Self {
        match self {
            Error::NumericalFailure { .. } => Error::NumericalFailure {
                epoch: Some(epoch),
                batch: Some(batch),
            },
            other => other,
        }
    }
}
