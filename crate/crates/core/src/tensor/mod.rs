//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.

mod array;
mod gradcheck;
pub mod kernels;
mod shape;
mod tape;

pub use array::Tensor;
pub use gradcheck::{grad_check, grad_check_at, GradCheckReport, REL_ERROR_FLOOR};
pub use kernels::UnfoldGeometry;
pub use shape::Shape;
pub use tape::{CustomBackward, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("data length {len} does not match shape {shape}")]
    DataLength { shape: Shape, len: usize },
    #[error("axis {axis} out of range for shape {shape}")]
    InvalidAxis { axis: usize, shape: Shape },
    #[error(
        "window k={kernel} s={stride} p={padding} does not fit a {height}×{width} input"
    )]
    Window {
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[error("backward needs a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),
}
