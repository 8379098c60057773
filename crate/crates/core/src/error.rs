use thiserror::Error;

pub type Result<T, E = DacatError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DacatError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature cache is empty")]
    EmptyCache,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("phase label {label} out of range for {num_phases} phases")]
    LabelOutOfRange { label: usize, num_phases: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("non-finite value at element {index}")]
    NonFiniteValue { index: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-contiguous frame index on line {line}: expected {expected}, found {found}")]
    NonContiguous {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("missing tensor {0:?}")]
    MissingTensor(String),

    #[error("tensor {name:?} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
