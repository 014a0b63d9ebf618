//! Synthetic degraded pages.
//!
//! The ground truth is a raster of block glyphs on a 16-pixel cell grid.
//! The degraded image tints paper and ink, darkens the page with smooth
//! stains and adds uniform pixel noise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{save_binary, save_continuous, DocumentPair};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CELL: usize = 16;
const GLYPH: usize = 12;
const MARGIN: usize = (CELL - GLYPH) / 2;

/// Ink test for glyph `id` at `(y, x)` inside its 12×12 box.
fn glyph_ink(id: usize, y: usize, x: usize) -> bool {
    let (y, x) = (y as isize, x as isize);
    let last = GLYPH as isize - 1;
    let (top, bottom, left, right) = (y < 2, y > last - 2, x < 2, x > last - 2);
    let mid_row = (5..7).contains(&y);
    let mid_col = (5..7).contains(&x);
    let diag = (x - y).abs() <= 1;
    let anti = (x + y - last).abs() <= 1;
    match id % 8 {
        0 => top || bottom || left || right,
        1 => left || bottom,
        2 => top || mid_col,
        3 => left || right || mid_row,
        4 => diag || anti,
        5 => left || top || bottom || mid_row,
        6 => left || right || bottom,
        _ => top || bottom || anti,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    /// Probability that a cell row carries text.
    pub line_density: f64,
    /// Stain count range, inclusive.
    pub stains: (usize, usize),
    /// Half-width of the uniform pixel noise.
    pub noise: f64,
}

impl SynthSpec {
    pub fn square(side: usize) -> Self {
        SynthSpec {
            height: side,
            width: side,
            line_density: 0.6,
            stains: (3, 6),
            noise: 0.05,
        }
    }
}

/// `H×W` text raster: 1 is paper, 0 is ink.
pub fn clean_raster<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Tensor {
    let (h, w) = (spec.height, spec.width);
    let mut gt = vec![1.0; h * w];
    let (rows, cols) = (h / CELL, w / CELL);
    for r in 1..rows.saturating_sub(1) {
        if !rng.gen_bool(spec.line_density) {
            continue;
        }
        let mut c = 1;
        while c + 1 < cols {
            let word = rng.gen_range(2..=6).min(cols - 1 - c);
            for cc in c..c + word {
                let id = rng.gen_range(0..8);
                for y in 0..GLYPH {
                    for x in 0..GLYPH {
                        if glyph_ink(id, y, x) {
                            gt[(r * CELL + MARGIN + y) * w + cc * CELL + MARGIN + x] = 0.0;
                        }
                    }
                }
            }
            c += word + 1;
        }
    }
    Tensor::new(vec![h, w], gt).expect("raster shape")
}

/// Renders a `3×H×W` degraded page from a ground truth.
pub fn degrade<R: Rng + ?Sized>(gt: &Tensor, spec: &SynthSpec, rng: &mut R) -> Tensor {
    let (h, w) = (gt.dims()[0], gt.dims()[1]);
    let brightness = rng.gen_range(0.95..=1.0);
    let paper = [0.93 * brightness, 0.88 * brightness, 0.78 * brightness];
    let ink = [0.15, 0.13, 0.12];
    let n_stains = rng.gen_range(spec.stains.0..=spec.stains.1);
    let stains: Vec<(f64, f64, f64, f64)> = (0..n_stains)
        .map(|_| {
            (
                rng.gen_range(0.0..h as f64),
                rng.gen_range(0.0..w as f64),
                rng.gen_range(8.0..30.0),
                rng.gen_range(0.15..0.35),
            )
        })
        .collect();
    let mut shade = vec![1.0; h * w];
    for (i, s) in shade.iter_mut().enumerate() {
        let (y, x) = ((i / w) as f64, (i % w) as f64);
        for &(cy, cx, sigma, strength) in &stains {
            let d2 = (y - cy).powi(2) + (x - cx).powi(2);
            *s *= 1.0 - strength * (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let mut out = Vec::with_capacity(3 * h * w);
    for ch in 0..3 {
        for (i, &g) in gt.data().iter().enumerate() {
            let base = if g == 1.0 { paper[ch] * shade[i] } else { ink[ch] };
            out.push((base + rng.gen_range(-spec.noise..=spec.noise)).clamp(0.0, 1.0));
        }
    }
    Tensor::new(vec![3, h, w], out).expect("page shape")
}

pub fn synthetic_pair_with(spec: &SynthSpec, seed: u64) -> DocumentPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = clean_raster(spec, &mut rng);
    let degraded = degrade(&gt, spec, &mut rng);
    DocumentPair {
        degraded,
        gt,
        source_id: format!("synthetic-{seed}"),
    }
}

/// A square synthetic page.
pub fn synthetic_pair(side: usize, seed: u64) -> DocumentPair {
    synthetic_pair_with(&SynthSpec::square(side), seed)
}

/// Writes `per_year` PNG pairs for every year under `dir` and a manifest
/// listing them; returns the manifest path.
pub fn write_dataset(dir: &Path, years: &[&str], per_year: usize, side: usize, seed: u64) -> Result<PathBuf> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let mut manifest = String::new();
    for (yi, year) in years.iter().enumerate() {
        let sub = dir.join(year);
        std::fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        for i in 0..per_year {
            let pair = synthetic_pair(side, seed.wrapping_add((yi * 1000 + i) as u64));
            let (d, g) = (format!("{year}/page{i}.png"), format!("{year}/page{i}_gt.png"));
            save_continuous(&dir.join(&d), &pair.degraded)?;
            save_binary(&dir.join(&g), &pair.gt)?;
            let _ = writeln!(manifest, "{year}\t{d}\t{g}");
        }
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest).map_err(io_err(&path))?;
    Ok(path)
}
