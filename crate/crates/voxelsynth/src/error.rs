//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("non-binary payload: {count} voxel(s) outside {{0,1}} after thresholding")]
    NonBinaryPayload { count: u64 },

    #[error("dimensions {dims:?} overflow addressable space")]
    DimsOverflow { dims: (usize, usize, usize) },

    #[error("grid dimensions differ: {left:?} vs {right:?}")]
    DimsMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("grid spacings differ: {left:?} vs {right:?}")]
    SpacingMismatch {
        left: (f64, f64, f64),
        right: (f64, f64, f64),
    },

    #[error("dimension {axis} is odd ({value}); pad the volume before downsampling")]
    OddDimension { axis: char, value: usize },

    #[error("bit-key widths differ: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },

    #[error("coordinate {coord:?} outside grid of dims {dims:?}")]
    CoordOutOfBounds {
        coord: (usize, usize, usize),
        dims: (usize, usize, usize),
    },

    #[error("{0}")]
    Validation(String),

    #[error("pipeline stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by bad inputs or arguments rather than the
    /// environment; the CLI maps these to exit code 2 and I/O errors to 3.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::Stage { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
