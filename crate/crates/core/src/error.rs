use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("frame {frame} is {got:?}, expected {expected:?}")]
    DimensionMismatch {
        frame: usize,
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error("frame index {index} out of range 1..={count}")]
    FrameOutOfRange { index: usize, count: usize },
    #[error("degenerate mark on frame {0}: the three points coincide")]
    DegenerateMark(usize),
    #[error("invalid mark on frame {frame}: {reason}")]
    InvalidMark { frame: usize, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(
        "insufficient training examples ({positives} positive, {negatives} negative); \
         fall back to gate-only detection"
    )]
    InsufficientExamples { positives: usize, negatives: usize },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("only {0} tracklet states; use detection presence as confidence instead")]
    TooFewStates(usize),
    #[error("unknown tracklet {0}")]
    UnknownTracklet(u64),
    #[error("unknown review {0}")]
    UnknownReview(String),
    #[error("invalid operation: {0}")]
    InvalidOperation(String),
    #[error("stale batch token {got}; current token is {current}, refetch reviews")]
    StaleToken { current: String, got: String },
    #[error("sequence number {got} is not above the last applied {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("stage error: {0}")]
    Stage(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Decode { .. } => "decode",
            Error::Manifest(_) => "manifest",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::FrameOutOfRange { .. } => "frame_out_of_range",
            Error::DegenerateMark(_) => "degenerate_mark",
            Error::InvalidMark { .. } => "invalid_mark",
            Error::Precondition(_) => "precondition",
            Error::InsufficientExamples { .. } => "insufficient_examples",
            Error::DegenerateData(_) => "degenerate_data",
            Error::TooFewStates(_) => "too_few_states",
            Error::UnknownTracklet(_) => "unknown_tracklet",
            Error::UnknownReview(_) => "unknown_review",
            Error::InvalidOperation(_) => "invalid_operation",
            Error::StaleToken { .. } => "stale_token",
            Error::OutOfOrder { .. } => "out_of_order",
            Error::Stage(_) => "stage",
            Error::Serde(_) => "serde",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
