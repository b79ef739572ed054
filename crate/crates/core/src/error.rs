use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding a NIfTI-1 volume.
#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a NIfTI-1 header: sizeof_hdr is {0}, expected 348")]
    NotNifti(i32),
    #[error("bad magic {0:?}, expected \"n+1\\0\" or \"ni1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensionality dim[0]={0}, expected 3 or 4")]
    BadDimensionality(i16),
    #[error("4D volume with {0} frames; only single-frame 4D files are accepted")]
    MultiFrame(i16),
    #[error("invalid dimension {axis}: {value}")]
    InvalidDim { axis: usize, value: i16 },
    #[error("invalid voxel spacing {0:?}")]
    InvalidSpacing([f32; 3]),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid vox_offset {0}")]
    BadOffset(f32),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nifti(#[from] NiftiError),
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch([usize; 3], [usize; 3]),
    #[error("spacing mismatch: {0:?} vs {1:?}")]
    SpacingMismatch([f64; 3], [f64; 3]),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected a binary mask, found values outside {{0,1}}")]
    NotBinary,
    #[error("expected a probability map, found values outside [0,1]")]
    NotProbability,
    #[error("threshold {0} outside ]0,1]")]
    InvalidThreshold(f64),
    #[error("empty surface: surface metrics need two nonempty masks")]
    EmptySurface,
    #[error("empty ground truth")]
    EmptyGroundTruth,
    #[error("no folds to pool")]
    NoFolds,
    #[error("invalid fold statistics: {0}")]
    InvalidFold(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero variance in volume correlation")]
    DegenerateVariance,
}

impl NiftiError {
    /// Stable variant name for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            NiftiError::Io { .. } => "Io",
            NiftiError::NotNifti(_) => "NotNifti",
            NiftiError::BadMagic(_) => "BadMagic",
            NiftiError::UnsupportedDatatype(_) => "UnsupportedDatatype",
            NiftiError::BadDimensionality(_) => "BadDimensionality",
            NiftiError::MultiFrame(_) => "MultiFrame",
            NiftiError::InvalidDim { .. } => "InvalidDim",
            NiftiError::InvalidSpacing(_) => "InvalidSpacing",
            NiftiError::Truncated { .. } => "Truncated",
            NiftiError::BadOffset(_) => "BadOffset",
        }
    }
}

impl Error {
    /// Stable variant name for reports; NIfTI failures report their own.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Nifti(e) => e.kind(),
            Error::DimensionMismatch(..) => "DimensionMismatch",
            Error::SpacingMismatch(..) => "SpacingMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::NotBinary => "NotBinary",
            Error::NotProbability => "NotProbability",
            Error::InvalidThreshold(_) => "InvalidThreshold",
            Error::EmptySurface => "EmptySurface",
            Error::EmptyGroundTruth => "EmptyGroundTruth",
            Error::NoFolds => "NoFolds",
            Error::InvalidFold(_) => "InvalidFold",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::DegenerateVariance => "DegenerateVariance",
        }
    }
}
