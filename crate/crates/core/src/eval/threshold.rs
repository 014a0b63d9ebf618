//! Classical global and local thresholding. Outputs follow the model's
//! convention: 0 for text, 1 for background.

use crate::error::{Error, Result};
use crate::model::channel_mean;
use crate::tensor::Tensor;

/// Gray levels in `[0, 1]` mapped to 256 bins by rounding `v·255`.
pub fn histogram(gray: &Tensor) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[quantize(v) as usize] += 1;
    }
    hist
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Between-class variance of splitting at `t` (classes `< t` and `≥ t`),
/// up to a constant factor: `(N·S₀ − n₀·S)² / (n₀·n₁)`, or 0 when a
/// class is empty.
pub fn otsu_score(n0: u64, s0: u64, n: u64, s: u64) -> f64 {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let diff = (n as i128 * s0 as i128 - n0 as i128 * s as i128).unsigned_abs();
    (diff * diff) as f64 / (n0 as f64 * n1 as f64)
}

/// Bin threshold maximizing between-class variance; pixels below it are
/// text. Ties go to the lowest threshold. A histogram with one occupied bin
/// returns that bin, so every pixel lands in the background class.
pub fn otsu_threshold(hist: &[u64; 256]) -> u8 {
    let occupied: Vec<usize> = (0..256).filter(|&b| hist[b] > 0).collect();
    if occupied.len() <= 1 {
        return occupied.first().copied().unwrap_or(0) as u8;
    }
    let n: u64 = hist.iter().sum();
    let s: u64 = hist.iter().enumerate().map(|(b, &c)| b as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let (mut best_t, mut best) = (0usize, f64::NEG_INFINITY);
    for (t, &count) in hist.iter().enumerate() {
        let score = otsu_score(n0, s0, n, s);
        if score > best {
            best = score;
            best_t = t;
        }
        n0 += count;
        s0 += t as u64 * count;
    }
    best_t as u8
}

/// Otsu on the channel mean of a `C×H×W` image.
pub fn otsu(image: &Tensor) -> Tensor {
    let gray = channel_mean(image);
    let t = otsu_threshold(&histogram(&gray));
    gray.map(|v| if quantize(v) < t { 0.0 } else { 1.0 })
}

/// Summed-area tables of values and squares over an `H×W` plane, with
/// one row and column of leading zeros.
pub struct IntegralImage {
    h: usize,
    w: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl IntegralImage {
    pub fn new(gray: &Tensor) -> Self {
        let (h, w) = (gray.dims()[0], gray.dims()[1]);
        let stride = w + 1;
        let mut sum = vec![0.0; (h + 1) * stride];
        let mut sq = vec![0.0; (h + 1) * stride];
        for y in 0..h {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for x in 0..w {
                let v = gray.data()[y * w + x];
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
            }
        }
        IntegralImage { h, w, sum, sq }
    }

    /// Mean and population standard deviation over the `window×window`
    /// square centred at `(y, x)`, clipped to the image.
    pub fn stats(&self, y: usize, x: usize, window: usize) -> (f64, f64) {
        let r = window / 2;
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(self.h));
        let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(self.w));
        let stride = self.w + 1;
        let area = |t: &[f64]| t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0];
        let count = ((y1 - y0) * (x1 - x0)) as f64;
        let mean = area(&self.sum) / count;
        let var = (area(&self.sq) / count - mean * mean).max(0.0);
        (mean, var.sqrt())
    }
}

/// Per-pixel local mean and standard deviation planes.
pub fn window_stats(gray: &Tensor, window: usize) -> (Tensor, Tensor) {
    let (h, w) = (gray.dims()[0], gray.dims()[1]);
    let ii = IntegralImage::new(gray);
    let (mut mean, mut std) = (Vec::with_capacity(h * w), Vec::with_capacity(h * w));
    for y in 0..h {
        for x in 0..w {
            let (m, s) = ii.stats(y, x, window);
            mean.push(m);
            std.push(s);
        }
    }
    let shape = vec![h, w];
    (
        Tensor::new(shape.clone(), mean).expect("plane shape"),
        Tensor::new(shape, std).expect("plane shape"),
    )
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!("threshold window must be odd and at least 3, got {window}")));
    }
    Ok(())
}

fn local(image: &Tensor, window: usize, threshold: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    check_window(window)?;
    let gray = channel_mean(image);
    let ii = IntegralImage::new(&gray);
    let w = gray.dims()[1];
    let data = gray
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (m, s) = ii.stats(i / w, i % w, window);
            if v < threshold(m, s) {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    Ok(Tensor::new(gray.dims().to_vec(), data)?)
}

pub const DEFAULT_WINDOW: usize = 25;
pub const NIBLACK_K: f64 = -0.2;
pub const SAUVOLA_K: f64 = 0.2;
pub const SAUVOLA_R: f64 = 0.5;
pub const BRADLEY_T: f64 = 0.15;

/// `T = m + k·s`.
pub fn niblack(image: &Tensor, window: usize, k: f64) -> Result<Tensor> {
    local(image, window, |m, s| m + k * s)
}

/// `T = m·(1 + k·(s/R − 1))`.
pub fn sauvola(image: &Tensor, window: usize, k: f64, r: f64) -> Result<Tensor> {
    local(image, window, |m, s| m * (1.0 + k * (s / r - 1.0)))
}

/// Text where the pixel is darker than `(1 − t)` times its window mean.
pub fn bradley(image: &Tensor, window: usize, t: f64) -> Result<Tensor> {
    local(image, window, |m, _| m * (1.0 - t))
}

/// An eighth of the shorter side, made odd, at least 3.
pub fn bradley_window(height: usize, width: usize) -> usize {
    ((height.min(width) / 8) | 1).max(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Otsu,
    Niblack,
    Sauvola,
    Bradley,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Otsu, Baseline::Niblack, Baseline::Sauvola, Baseline::Bradley];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Otsu => "Otsu",
            Baseline::Niblack => "Niblack",
            Baseline::Sauvola => "Sauvola",
            Baseline::Bradley => "Bradley",
        }
    }

    /// Binarizes a `C×H×W` image with default parameters.
    pub fn apply(self, image: &Tensor) -> Result<Tensor> {
        match self {
            Baseline::Otsu => Ok(otsu(image)),
            Baseline::Niblack => niblack(image, DEFAULT_WINDOW, NIBLACK_K),
            Baseline::Sauvola => sauvola(image, DEFAULT_WINDOW, SAUVOLA_K, SAUVOLA_R),
            Baseline::Bradley => {
                let d = image.dims();
                bradley(image, bradley_window(d[1], d[2]), BRADLEY_T)
            }
        }
    }
}
