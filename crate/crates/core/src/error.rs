use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("insufficient extrema: need at least {needed} maxima and minima, found {maxima} maxima and {minima} minima")]
    InsufficientExtrema {
        needed: usize,
        maxima: usize,
        minima: usize,
    },

    #[error("too few knots: need at least {needed}, got {found}")]
    TooFewKnots { needed: usize, found: usize },

    #[error("knots are not strictly increasing at position {index}")]
    NonMonotoneKnots { index: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("window length {window_len} exceeds series length {len}")]
    WindowTooLong { window_len: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("reference and test signals are identical; SNR is unbounded")]
    ZeroNoise,

    #[error("reference signal has zero energy")]
    ZeroSignal,

    #[error("series too short: need at least {needed} samples, got {found}")]
    TooShort { needed: usize, found: usize },

    #[error("invalid frequency band [{lo}, {hi}) Hz (nyquist {nyquist} Hz)")]
    InvalidBand { lo: f64, hi: f64, nyquist: f64 },

    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),

    #[error("artifact duration {artifact_s} s is not shorter than the record ({record_s} s)")]
    DurationTooLong { artifact_s: f64, record_s: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: missing `# rate_hz=<value>` header")]
    MissingRateHeader { path: PathBuf },

    #[error("corrupt file {path}: {message}")]
    CorruptFile { path: PathBuf, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}
