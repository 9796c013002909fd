use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {node}: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error("leaf `{0}` is not bound")]
    UnboundLeaf(String),
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("{0}: zero-length input")]
    ZeroLengthInput(&'static str),
    #[error("batch norm in training mode needs at least 2 values per channel, got {0}")]
    DegenerateBatch(usize),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("input length {len} is not divisible by {multiple}")]
    LengthNotDivisible { len: usize, multiple: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported WAV format ({detail})")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("{path}: expected mono audio, found {channels} channels")]
    StereoInput { path: PathBuf, channels: u16 },
    #[error("{path}: truncated WAV file")]
    TruncatedFile { path: PathBuf },
    #[error("{path}: sample rate {found} Hz, expected {expected} Hz")]
    SampleRateMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("sample amplitude {0} outside [-1, 1]")]
    Clipping(f32),
    #[error("empty waveform")]
    EmptyWaveform,

    #[error("{0} signal has zero power")]
    ZeroPower(&'static str),
    #[error("noise segment [{start}, {end}) out of range for noise of length {len}")]
    SegmentOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("noise `{id}` has {len} samples, needs at least {needed}")]
    InsufficientNoise {
        id: String,
        len: usize,
        needed: usize,
    },
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("manifest: {0}")]
    Manifest(String),

    #[error("signal too short for STOI: {frames} frames after silence removal, need {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("missing files:\n{}", .0.iter().map(|p| format!("  {}", p.display())).collect::<Vec<_>>().join("\n"))]
    MissingFiles(Vec<PathBuf>),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("checkpoint does not match config: {0}")]
    CheckpointMismatch(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Errors caused by malformed file contents rather than bad arguments.
    pub fn is_data_format(&self) -> bool {
        match self {
            Error::UnsupportedFormat { .. }
            | Error::StereoInput { .. }
            | Error::TruncatedFile { .. }
            | Error::Checkpoint(_)
            | Error::CheckpointMismatch(_)
            | Error::Manifest(_) => true,
            Error::Context { source, .. } => source.is_data_format(),
            _ => false,
        }
    }
}
