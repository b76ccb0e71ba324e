//! Crate-wide error type.

use crate::solver::Fidelity;

/// Errors produced by field construction, solvers and the I/O layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("field dimensions {actual:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("field dimensions must be positive, got {width}x{height}")]
    EmptyField { width: usize, height: usize },
    #[error("value buffer of length {len} does not match {width}x{height}")]
    BadLength {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("field values must be finite")]
    NonFinite,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("scale sweep failed at stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid scale grid: {0}")]
    InvalidGrid(String),
    #[error("scale grid needs at least {min} entries, got {len}")]
    GridTooShort { min: usize, len: usize },
    #[error("scale space was not computed from this image (checksum mismatch)")]
    ForeignScaleSpace,
    #[error("operation requires {expected:?} fidelity, got {actual:?}")]
    FidelityMismatch {
        expected: Fidelity,
        actual: Fidelity,
    },
    #[error("filter has {len} weights but the grid has {grid} scales")]
    FilterLength { len: usize, grid: usize },
    #[error("invalid band intervals: {0}")]
    InvalidBands(String),
    #[error("mask contains no pixels")]
    EmptyMask,
    #[error("field is not binary")]
    NotBinary,
    #[error("instance too large for exhaustive search: {pixels} pixels (limit {limit})")]
    InstanceTooLarge { pixels: usize, limit: usize },
    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),
    #[error("unknown image format")]
    UnknownImageFormat,
    #[error("truncated image file")]
    TruncatedImage,
    #[error("image has zero dimensions")]
    ZeroImageDimensions,
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("malformed decomposition file: {0}")]
    MalformedDecomposition(String),
    #[error("invalid configuration: {0}")]
    MalformedConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error is (or wraps) a numerical divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Diverged { .. } => true,
            Error::Stage { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
