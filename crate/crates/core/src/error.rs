use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;
use crate::train::CheckpointError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported input size {height}×{width}: {reason}")]
    UnsupportedSize {
        height: usize,
        width: usize,
        reason: String,
    },
    #[error("non-finite gradient in parameter `{name}` (first bad value {value} at index {index})")]
    NonFiniteGradient {
        name: String,
        index: usize,
        value: f64,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unsupported image format for {0} (expected PNG or PGM/PPM)")]
    UnsupportedFormat(PathBuf),
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("cannot write image {path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("dimension mismatch: {left} is {left_dims:?} but {right} is {right_dims:?}")]
    DimensionMismatch {
        left: String,
        left_dims: (usize, usize),
        right: String,
        right_dims: (usize, usize),
    },
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown year `{year}` (available: {available})")]
    UnknownYear { year: String, available: String },
    #[error("source `{0}` appears in both the training and the test split")]
    OverlappingSplit(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
