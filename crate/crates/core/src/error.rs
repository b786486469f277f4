use std::path::PathBuf;

use crate::model::{ClassId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid band [{low_hz}, {high_hz}] Hz at sampling rate {sampling_rate} Hz: {reason}")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        sampling_rate: f64,
        reason: &'static str,
    },

    #[error("common average reference needs at least 2 channels, got {0}")]
    TooFewChannels(usize),

    #[error("epoch window for onset {onset} spans samples [{start}, {end}) outside a recording of {len} samples")]
    WindowOutOfRange {
        onset: usize,
        start: i64,
        end: i64,
        len: usize,
    },

    #[error("invalid downsampling factor {0}")]
    InvalidFactor(usize),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(&'static str),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("label spaces differ and no explicit class pairing was supplied")]
    AmbiguousPairing,

    #[error("class count mismatch: {source_classes} source classes vs {target_classes} target classes")]
    CardinalityMismatch {
        source_classes: usize,
        target_classes: usize,
    },

    #[error("class pairing is not injective: {0}")]
    NonInjectivePairing(String),

    #[error("class '{0}' has no trials")]
    MissingClass(ClassId),

    #[error("class '{0}' is not part of the transform")]
    UnknownClass(ClassId),

    #[error("{0} requires labels")]
    LabelsRequired(&'static str),

    #[error("incremental alignment state holds no trials")]
    EmptyState,

    #[error("spatial filter fit received an empty class")]
    EmptyClass,

    #[error("classifier needs two classes with positive weight, found {0}")]
    SingleClass(usize),

    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),

    #[error("invalid calibration size m={m} for {n} trials")]
    InvalidM { n: usize, m: usize },

    #[error("invalid domain '{domain_id}': {}", format_violations(.violations))]
    InvalidDomain {
        domain_id: String,
        violations: Vec<Violation>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown artifact: {0}")]
    UnknownArtifact(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("subject '{subject}', m={m}, repeat {repeat}: {source}")]
    Run {
        subject: String,
        m: usize,
        repeat: usize,
        #[source]
        source: Box<Error>,
    },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures caused by bad input rather than by the computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::DegenerateCovariance(_) | Error::Io { .. } => false,
            Error::Run { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
