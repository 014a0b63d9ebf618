//! Tokens-to-Token transformer encoder-decoder for document image
//! binarization.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`tensor`]), the
//! network itself ([`t2t`], [`codec`], [`model`]), its training loop
//! ([`train`]), dataset handling ([`data`]) and the DIBCO evaluation suite
//! with classical thresholding baselines ([`eval`]). [`cli`] backs the
//! `binformer` binary.

pub mod cli;
pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod t2t;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
