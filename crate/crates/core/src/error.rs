use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ingest
    #[error("video has no frames")]
    EmptyVideo,
    #[error("frame rate must be positive, got {0}")]
    BadRate(f64),
    #[error("period markers are not sorted by timestamp (marker {index})")]
    UnsortedMarkers { index: usize },
    #[error("marker at {timestamp}s lies outside the recording (duration {duration}s)")]
    MarkerOutOfRange { timestamp: f64, duration: f64 },
    #[error("{field} score {value} out of range")]
    ScoreOutOfRange { field: &'static str, value: i64 },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: duplicate row for subject {subject}, period {period}, rater {rater}", path.display())]
    DuplicateRow {
        path: PathBuf,
        line: usize,
        subject: String,
        period: String,
        rater: String,
    },
    #[error("missing file {}{}", path.display(), row.map(|r| format!(" (manifest line {r})")).unwrap_or_default())]
    MissingFile { path: PathBuf, row: Option<usize> },
    #[error("inconsistent frame size: expected {expected:?}, got {actual:?}")]
    FrameSizeMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    // detect
    #[error("bounding box has no area inside the frame")]
    DegenerateBox,
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("detector: {0}")]
    Detector(String),
    #[error("detector did not answer within {0:?}")]
    DetectorTimeout(std::time::Duration),

    // model
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("weight shape mismatch for {layer}: expected {expected:?}, got {actual:?}")]
    WeightShapeMismatch {
        layer: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("crop pixel value {0} outside [0, 1]")]
    UnnormalizedInput(f32),
    #[error("incomplete model spec: {0}")]
    IncompleteSpec(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    // training
    #[error("training set is empty")]
    EmptyDataset,
    #[error("feature length mismatch: expected {expected}, got {actual}")]
    FeatureLengthMismatch { expected: usize, actual: usize },
    #[error("invalid optimizer config: {0}")]
    BadOptimizer(String),
    #[error("need at least {needed} frames, got {actual}")]
    TooFewFrames { needed: usize, actual: usize },

    // eval
    #[error("need at least two subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("only one class present")]
    SingleClass,
    #[error("expected agreement is 1; kappa undefined")]
    DegenerateMarginals,
    #[error("zero variance input")]
    ZeroVariance,
    #[error("held-out subject {0} leaked into the training set")]
    Leakage(String),

    // synth / config
    #[error("bad config: {0}")]
    BadConfig(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

/// Coarse grouping of errors, for exit codes and log routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    /// Bad or missing input files, labels or video content.
    Data,
    /// Invalid configuration or model specification.
    Config,
    /// Failures inside detection, training or evaluation.
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            EmptyVideo
            | BadRate(_)
            | UnsortedMarkers { .. }
            | MarkerOutOfRange { .. }
            | ScoreOutOfRange { .. }
            | Parse { .. }
            | DuplicateRow { .. }
            | MissingFile { .. }
            | FrameSizeMismatch { .. }
            | UnnormalizedInput(_)
            | TooFewFrames { .. }
            | TooFewSubjects(_)
            | EmptyDataset
            | Checkpoint(_)
            | WeightShapeMismatch { .. }
            | Io { .. }
            | Image { .. } => ErrorKind::Data,
            BadConfig(_) | BadOptimizer(_) | IncompleteSpec(_) => ErrorKind::Config,
            _ => ErrorKind::Runtime,
        }
    }
}
