use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DocumentPair, TILE_SIZE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rotation {
    Deg90,
    Deg180,
    Deg270,
}

impl Rotation {
    fn quarter_turns(self) -> usize {
        match self {
            Rotation::Deg90 => 1,
            Rotation::Deg180 => 2,
            Rotation::Deg270 => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentSpec {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub rotations: Vec<Rotation>,
    /// Side of each random square crop, resized back to the tile side.
    pub crop_size: usize,
    pub crop_count: usize,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            horizontal_flip: true,
            vertical_flip: false,
            rotations: Vec::new(),
            crop_size: 192,
            crop_count: 2,
            seed: 42,
        }
    }
}

impl AugmentSpec {
    /// Only the identity view.
    pub fn none() -> Self {
        AugmentSpec {
            horizontal_flip: false,
            vertical_flip: false,
            rotations: Vec::new(),
            crop_size: TILE_SIZE,
            crop_count: 0,
            seed: 0,
        }
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.crop_count > 0 && (self.crop_size == 0 || self.crop_size > height.min(width)) {
            return Err(Error::Config(format!(
                "crop size {} must lie in 1..={}",
                self.crop_size,
                height.min(width)
            )));
        }
        Ok(())
    }
}

fn dims3(t: &Tensor) -> (usize, usize, usize) {
    match *t.dims() {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => panic!("expected an H×W or C×H×W image, got {}", t.shape()),
    }
}

fn remap(t: &Tensor, out_h: usize, out_w: usize, src: impl Fn(usize, usize) -> (usize, usize)) -> Tensor {
    let (c, h, w) = dims3(t);
    let data = t.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        for y in 0..out_h {
            for x in 0..out_w {
                let (sy, sx) = src(y, x);
                out.push(data[(ch * h + sy) * w + sx]);
            }
        }
    }
    let dims = if t.dims().len() == 2 { vec![out_h, out_w] } else { vec![c, out_h, out_w] };
    Tensor::new(dims, out).expect("remap preserves element count")
}

/// Mirrors columns.
pub fn flip_horizontal(t: &Tensor) -> Tensor {
    let (_, h, w) = dims3(t);
    remap(t, h, w, |y, x| (y, w - 1 - x))
}

/// Mirrors rows.
pub fn flip_vertical(t: &Tensor) -> Tensor {
    let (_, h, w) = dims3(t);
    remap(t, h, w, |y, x| (h - 1 - y, x))
}

/// Quarter turn clockwise; an `H×W` input becomes `W×H`.
pub fn rotate90(t: &Tensor) -> Tensor {
    let (_, h, w) = dims3(t);
    remap(t, w, h, |y, x| (h - 1 - x, y))
}

fn crop(t: &Tensor, y0: usize, x0: usize, size: usize) -> Tensor {
    remap(t, size, size, |y, x| (y0 + y, x0 + x))
}

/// Nearest-neighbour resampling with pixel-centre alignment.
pub fn resize_nearest(t: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (_, h, w) = dims3(t);
    let pick = |dst: usize, from: usize, to: usize| (((dst as f64 + 0.5) * from as f64 / to as f64) as usize).min(from - 1);
    remap(t, out_h, out_w, |y, x| (pick(y, h, out_h), pick(x, w, out_w)))
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = dims3(t);
    let data = t.data();
    let coord = |dst: usize, from: usize, to: usize| {
        let s = ((dst as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(from - 1), s - i0 as f64)
    };
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for y in 0..out_h {
            let (y0, y1, fy) = coord(y, h, out_h);
            for x in 0..out_w {
                let (x0, x1, fx) = coord(x, w, out_w);
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    let dims = if t.dims().len() == 2 { vec![out_h, out_w] } else { vec![c, out_h, out_w] };
    Tensor::new(dims, out).expect("resize output shape")
}

fn variant(pair: &DocumentPair, tag: &str, f: impl Fn(&Tensor) -> Tensor) -> DocumentPair {
    DocumentPair {
        degraded: f(&pair.degraded),
        gt: f(&pair.gt),
        source_id: format!("{}+{tag}", pair.source_id),
    }
}

/// The original pair followed by each enabled transform applied on its own
/// and then `crop_count` random crops resized back to the pair's size
/// (bilinear for the image, nearest for the ground truth).
pub fn augment(pair: &DocumentPair, spec: &AugmentSpec) -> Result<Vec<DocumentPair>> {
    let (h, w) = (pair.height(), pair.width());
    spec.validate(h, w)?;
    let mut out = vec![pair.clone()];
    if spec.horizontal_flip {
        out.push(variant(pair, "fliph", flip_horizontal));
    }
    if spec.vertical_flip {
        out.push(variant(pair, "flipv", flip_vertical));
    }
    for rot in &spec.rotations {
        let turns = rot.quarter_turns();
        out.push(variant(pair, &format!("rot{}", 90 * turns), |t| {
            (0..turns).fold(t.clone(), |acc, _| rotate90(&acc))
        }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in 0..spec.crop_count {
        let y0 = rng.gen_range(0..=h - spec.crop_size);
        let x0 = rng.gen_range(0..=w - spec.crop_size);
        let s = spec.crop_size;
        out.push(DocumentPair {
            degraded: resize_bilinear(&crop(&pair.degraded, y0, x0, s), h, w),
            gt: resize_nearest(&crop(&pair.gt, y0, x0, s), h, w),
            source_id: format!("{}+crop{i}", pair.source_id),
        });
    }
    Ok(out)
}
