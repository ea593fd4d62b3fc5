//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed NPY magic, version, or header.
    #[error("npy format error: {0}")]
    NpyFormat(String),

    /// The file is valid NPY but uses a layout this crate does not read.
    #[error("unsupported npy layout: {0}")]
    UnsupportedLayout(String),

    /// Configuration document failed validation; the message names the key.
    #[error("config error: {0}")]
    Config(String),

    /// A scalar or enum argument violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Array shapes are inconsistent with each other or with a contract.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An index, window, or slab fell outside the array bounds.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// Data values violated a domain invariant (mask not binary, non-finite
    /// voxels, atom norm off unit, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A mask with no nonzero voxels where at least one is required.
    #[error("empty mask: no nonzero voxels")]
    EmptyMask,

    /// Rejection sampling gave up.
    #[error("patch sampling exhausted after {attempts} consecutive rejections: {constraint}")]
    SamplingExhausted { attempts: usize, constraint: String },

    /// An iterative solver produced a non-finite value.
    #[error("numerical divergence at iteration {iteration}: {context}")]
    NumericalDivergence { iteration: usize, context: String },

    /// Pruning removed every atom.
    #[error("empty dictionary: {0}")]
    EmptyDictionary(String),

    /// Dictionary initialization cannot produce a feasible atom.
    #[error("dictionary init error: {0}")]
    DictionaryInit(String),

    /// Dice is undefined when both masks have zero weight and smoothing is off.
    #[error("undefined dice: prediction and ground truth both sum to zero")]
    UndefinedDice,

    /// An error from a named pipeline stage.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// A per-slice solver failure inside volume encoding.
    #[error("slice {index}: {source}")]
    SliceFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// I/O failure with path context.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Adapter for `map_err` that attaches path context to an I/O failure.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Attach a pipeline stage name, preserving the underlying error.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the root cause is a solver divergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalDivergence { .. } => true,
            Error::Stage { source, .. } | Error::SliceFailure { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}
