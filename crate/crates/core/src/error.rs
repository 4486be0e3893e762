use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("asymmetric matrix: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    AsymmetricMatrix { row: usize, col: usize, gap: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    EigenNotConverged { sweeps: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unrecognized container")]
    UnrecognizedContainer,

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("invalid amplitude at epoch {epoch}, channel {channel}, sample {sample}")]
    InvalidAmplitude {
        epoch: usize,
        channel: usize,
        sample: usize,
    },

    #[error("csv {path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("window out of range: [{start_ms}, {end_ms}) ms")]
    WindowOutOfRange { start_ms: f64, end_ms: f64 },

    #[error("need two classes")]
    NeedTwoClasses,

    #[error("numeric overflow in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("invalid layer index {index} (network has {layers} layers)")]
    InvalidLayer { index: usize, layers: usize },

    #[error("too few epochs: {0}")]
    TooFewEpochs(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
