use std::path::PathBuf;

use thiserror::Error;

/// Failures while reading, writing or constructing feature datasets.
#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {found:?}, expected \"FOVA\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("payload length mismatch: header implies {expected} bytes, file has {actual}")]
    PayloadLength { expected: u64, actual: u64 },
    #[error("label {label} at row {row} is outside [0, {num_classes})")]
    LabelOutOfRange {
        row: usize,
        label: u32,
        num_classes: usize,
    },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("cannot split {samples} samples across {clients} clients")]
    TooFewSamples { samples: usize, clients: usize },
    #[error("need {needed} shards but only {samples} samples are available")]
    TooManyShards { needed: usize, samples: usize },
    #[error("invalid partition parameter: {0}")]
    InvalidParameter(String),
    #[error("class {class} had no present client after {attempts} presence draws")]
    OrphanedClass { class: usize, attempts: usize },
    #[error("class {class} has {size} samples, fewer than the {clients} clients (strict mode)")]
    ClassTooSmall {
        class: usize,
        size: usize,
        clients: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum HeadError {
    #[error("operation requires a {expected} head, got {actual}")]
    KindMismatch {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} at row {row} is outside [0, {num_classes})")]
    LabelOutOfRange {
        row: usize,
        label: u32,
        num_classes: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient entry {value} at {location}")]
    NonFiniteGradient { location: String, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("curves have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("reference accuracy is zero at round {0}")]
    ZeroReference(usize),
    #[error("degenerate class structure: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Head(#[from] HeadError),
}

/// Crate-level error. The CLI maps each variant family to an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("noise: {0}")]
    Noise(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Feature(FeatureError::Io { .. }) | Error::Feature(_) => 3,
            Error::Partition(_) | Error::Noise(_) => 3,
            Error::Head(_) | Error::Optim(_) | Error::Metrics(_) => 4,
            Error::Io { .. } => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
