use thiserror::Error;

use crate::model::Unit;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Signal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unit mismatch: expected {expected:?}, got {actual:?}")]
    UnitMismatch { expected: Unit, actual: Unit },

    #[error("{what} {value} outside [{lo}, {hi}]")]
    OutOfBand {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("oscillator transient not settled: peak-to-peak drift {drift:.4} over last periods")]
    TransientNotSettled { drift: f64 },

    #[error("scatterer at {range_m:.3} m beyond max unambiguous range {max_m:.3} m")]
    RangeOverflow { range_m: f64, max_m: f64 },

    #[error("cube format error: {0}")]
    Format(String),

    #[error("cube length error: {0}")]
    Length(String),

    #[error("cube data error: {0}")]
    Data(String),

    #[error("weak bin {bin}: {fraction:.2} of columns have zero magnitude")]
    WeakBin { bin: usize, fraction: f64 },

    #[error("profile of {len} cells shorter than CFAR window {needed}")]
    Window { len: usize, needed: usize },

    #[error("degenerate signal in {stage}")]
    DegenerateSignal { stage: &'static str },

    #[error("degenerate weights in {stage}")]
    DegenerateWeights { stage: &'static str },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no contributing channels for {0} stream")]
    StreamEmpty(&'static str),

    #[error("invalid truth value {0}")]
    InvalidTruth(f64),

    #[error("fixture error: {0}")]
    Fixture(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorKind::Io,
            Error::WeakBin { .. }
            | Error::DegenerateSignal { .. }
            | Error::DegenerateWeights { .. }
            | Error::StreamEmpty(_)
            | Error::InsufficientData(_)
            | Error::TransientNotSettled { .. } => ErrorKind::Signal,
            _ => ErrorKind::Config,
        }
    }

    /// Pipeline stage that raised a signal-level error, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::DegenerateSignal { stage } | Error::DegenerateWeights { stage } => Some(stage),
            Error::WeakBin { .. } => Some("extract_phase"),
            Error::StreamEmpty(_) => Some("channel_fusion"),
            Error::InsufficientData(_) => Some("band_snr"),
            Error::TransientNotSettled { .. } => Some("heart_template"),
            _ => None,
        }
    }
}
