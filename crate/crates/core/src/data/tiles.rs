use super::DocumentPair;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TILE_SIZE: usize = 256;

/// Non-overlapping square grid over an `H×W` page, anchored top-left.
/// Right and bottom remainders are padded up to a whole tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileLayout {
    pub height: usize,
    pub width: usize,
    pub size: usize,
}

fn planes(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.dims() {
        [h, w] => Ok((1, h, w)),
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Config(format!("expected an H×W or C×H×W image, got {}", t.shape()))),
    }
}

impl TileLayout {
    pub fn new(height: usize, width: usize, size: usize) -> Self {
        assert!(size > 0, "tile size must be positive");
        TileLayout { height, width, size }
    }

    pub fn rows(&self) -> usize {
        self.height.div_ceil(self.size)
    }

    pub fn cols(&self) -> usize {
        self.width.div_ceil(self.size)
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left `(y, x)` of every tile in raster order.
    pub fn origins(&self) -> Vec<(usize, usize)> {
        (0..self.rows())
            .flat_map(|r| (0..self.cols()).map(move |c| (r * self.size, c * self.size)))
            .collect()
    }

    /// Cuts an `H×W` or `C×H×W` image into tiles of the same rank, filling
    /// the out-of-page area with `pad`.
    pub fn split(&self, image: &Tensor, pad: f64) -> Result<Vec<Tensor>> {
        let (c, h, w) = planes(image)?;
        if (h, w) != (self.height, self.width) {
            return Err(Error::DimensionMismatch {
                left: "image".into(),
                left_dims: (h, w),
                right: "tile layout".into(),
                right_dims: (self.height, self.width),
            });
        }
        let s = self.size;
        let src = image.data();
        let origins = self.origins();
        let mut tiles = Vec::with_capacity(origins.len());
        for (y0, x0) in origins {
            let mut data = vec![pad; c * s * s];
            let (rows, cols) = ((h - y0).min(s), (w - x0).min(s));
            for ch in 0..c {
                for y in 0..rows {
                    let from = (ch * h + y0 + y) * w + x0;
                    let to = (ch * s + y) * s;
                    data[to..to + cols].copy_from_slice(&src[from..from + cols]);
                }
            }
            let dims = if image.dims().len() == 2 { vec![s, s] } else { vec![c, s, s] };
            tiles.push(Tensor::new(dims, data)?);
        }
        Ok(tiles)
    }

    /// Places tiles back on the grid and crops to the page size.
    pub fn merge(&self, tiles: &[Tensor]) -> Result<Tensor> {
        if tiles.len() != self.len() {
            return Err(Error::Config(format!("layout has {} tiles, got {}", self.len(), tiles.len())));
        }
        let first = tiles.first().ok_or_else(|| Error::EmptyDataset("no tiles to merge".into()))?;
        let (c, _, _) = planes(first)?;
        let rank = first.dims().len();
        let s = self.size;
        let (h, w) = (self.height, self.width);
        let mut out = vec![0.0; c * h * w];
        for (tile, (y0, x0)) in tiles.iter().zip(self.origins()) {
            if planes(tile)? != (c, s, s) || tile.dims().len() != rank {
                return Err(Error::Config(format!("tile shape {} does not fit the layout", tile.shape())));
            }
            let (rows, cols) = ((h - y0).min(s), (w - x0).min(s));
            for ch in 0..c {
                for y in 0..rows {
                    let to = (ch * h + y0 + y) * w + x0;
                    let from = (ch * s + y) * s;
                    out[to..to + cols].copy_from_slice(&tile.data()[from..from + cols]);
                }
            }
        }
        let dims = if rank == 2 { vec![h, w] } else { vec![c, h, w] };
        Ok(Tensor::new(dims, out)?)
    }
}

/// Tiles of one page together with the layout needed to merge them.
#[derive(Clone, Debug, PartialEq)]
pub struct TiledPair {
    pub layout: TileLayout,
    pub tiles: Vec<DocumentPair>,
}

/// Splits a pair into `size`-pixel tiles padded with white.
pub fn tile(pair: &DocumentPair, size: usize) -> Result<TiledPair> {
    let layout = TileLayout::new(pair.height(), pair.width(), size);
    let degraded = layout.split(&pair.degraded, 1.0)?;
    let gt = layout.split(&pair.gt, 1.0)?;
    let tiles = degraded
        .into_iter()
        .zip(gt)
        .zip(layout.origins())
        .map(|((d, g), (y, x))| DocumentPair {
            degraded: d,
            gt: g,
            source_id: format!("{}@{y},{x}", pair.source_id),
        })
        .collect();
    Ok(TiledPair { layout, tiles })
}

pub fn tile_256(pair: &DocumentPair) -> Result<TiledPair> {
    tile(pair, TILE_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn page(h: usize, w: usize) -> DocumentPair {
        let degraded = Tensor::new(vec![3, h, w], (0..3 * h * w).map(|i| (i % 97) as f64 / 96.0).collect()).unwrap();
        let gt = Tensor::new(vec![h, w], (0..h * w).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
        DocumentPair::new(degraded, gt, "p").unwrap()
    }

    #[test]
    fn tile_counts_and_padding() {
        assert_eq!(tile_256(&page(512, 512)).unwrap().tiles.len(), 4);
        let t = tile_256(&page(300, 300)).unwrap();
        assert_eq!(t.tiles.len(), 4);
        let corner = &t.tiles[3];
        // 300 - 256 = 44 real rows/cols; the remaining 212 are white.
        assert_eq!(corner.gt.data()[43 * 256 + 43], page(300, 300).gt.data()[299 * 300 + 299]);
        assert!(corner.gt.data()[44 * 256..].iter().all(|&v| v == 1.0));
        assert!(corner.degraded.data()[44..256].iter().all(|&v| v == 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn tile_merge_crop_is_identity(h in 1usize..600, w in 1usize..600) {
            let p = page(h, w);
            let t = tile_256(&p).unwrap();
            let degraded: Vec<Tensor> = t.tiles.iter().map(|x| x.degraded.clone()).collect();
            let gt: Vec<Tensor> = t.tiles.iter().map(|x| x.gt.clone()).collect();
            prop_assert_eq!(t.layout.merge(&degraded).unwrap(), p.degraded);
            prop_assert_eq!(t.layout.merge(&gt).unwrap(), p.gt);
        }
    }
}
