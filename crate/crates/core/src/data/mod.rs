//! Document pairs: image I/O, 256-pixel tiling, augmentation, year-wise
//! splits and synthetic pages.

mod augment;
mod io;
mod manifest;
pub mod synth;
mod tiles;

pub use augment::{augment, flip_horizontal, flip_vertical, resize_bilinear, resize_nearest, rotate90, AugmentSpec, Rotation};
pub use io::{load_gt, load_image, load_pair, save_binary, save_continuous};
pub use manifest::{leave_one_out, Direction, Manifest, ManifestEntry, SourceId, Split};
pub use tiles::{tile, tile_256, TileLayout, TiledPair, TILE_SIZE};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A degraded page and its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentPair {
    /// `3×H×W`, values in `[0, 1]`.
    pub degraded: Tensor,
    /// `H×W` of `{0, 1}`; 0 is text.
    pub gt: Tensor,
    pub source_id: String,
}

impl DocumentPair {
    pub fn new(degraded: Tensor, gt: Tensor, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        let (dd, gd) = (degraded.dims(), gt.dims());
        if dd.len() != 3 || gd.len() != 2 {
            return Err(Error::Config(format!(
                "pair `{source_id}` needs a C×H×W image and an H×W ground truth, got {} and {}",
                degraded.shape(),
                gt.shape()
            )));
        }
        if dd[1..] != *gd {
            return Err(Error::DimensionMismatch {
                left: format!("{source_id} (degraded)"),
                left_dims: (dd[1], dd[2]),
                right: format!("{source_id} (ground truth)"),
                right_dims: (gd[0], gd[1]),
            });
        }
        if degraded.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("pair `{source_id}` has pixels outside [0, 1]")));
        }
        if gt.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config(format!("pair `{source_id}` has a non-binary ground truth")));
        }
        Ok(DocumentPair { degraded, gt, source_id })
    }

    pub fn height(&self) -> usize {
        self.gt.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.gt.dims()[1]
    }
}
