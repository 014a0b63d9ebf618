use super::morph::{dilate3, skeleton};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorError};

/// Pixel counts with text (value 0) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn check_pair(pred: &Tensor, gt: &Tensor, op: &'static str) -> Result<()> {
    if pred.shape() != gt.shape() || pred.dims().len() != 2 {
        return Err(TensorError::ShapeMismatch {
            op,
            left: pred.shape().clone(),
            right: gt.shape().clone(),
        }
        .into());
    }
    Ok(())
}

fn is_text(v: f64) -> bool {
    v < 0.5
}

impl ConfusionCounts {
    pub fn from_images(pred: &Tensor, gt: &Tensor) -> Result<Self> {
        check_pair(pred, gt, "confusion")?;
        let mut c = ConfusionCounts::default();
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            match (is_text(p), is_text(g)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `num/den` in percent; an empty denominator gives 100 when the other
/// side is empty too and 0 otherwise.
fn ratio_pct(num: f64, den: f64, other_empty: bool) -> f64 {
    if den > 0.0 {
        100.0 * num / den
    } else if other_empty {
        100.0
    } else {
        0.0
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// `10·log10(1/MSE)` on `{0, 1}` images; identical images give `+∞`.
pub fn psnr(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check_pair(pred, gt, "psnr")?;
    let wrong = pred.data().iter().zip(gt.data()).filter(|(p, g)| is_text(**p) != is_text(**g)).count();
    if wrong == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = wrong as f64 / pred.numel() as f64;
    Ok(10.0 * (1.0 / mse).log10())
}

/// PSNR of a continuous `C×H×W` (or `H×W`) output against an `H×W`
/// ground truth replicated over channels, with peak 1.
pub fn psnr_continuous(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let plane = gt.numel();
    if gt.dims().len() != 2 || pred.numel() == 0 || !pred.numel().is_multiple_of(plane.max(1)) || pred.dims().last() != gt.dims().last() {
        return Err(TensorError::ShapeMismatch {
            op: "psnr_continuous",
            left: pred.shape().clone(),
            right: gt.shape().clone(),
        }
        .into());
    }
    let sse: f64 = pred.data().iter().enumerate().map(|(i, &p)| (p - gt.data()[i % plane]).powi(2)).sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (pred.numel() as f64 / sse).log10())
}

/// F-measure in percent with text as the positive class.
pub fn f_measure(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let c = ConfusionCounts::from_images(pred, gt)?;
    let (pred_text, gt_text) = (c.tp + c.fp, c.tp + c.fn_);
    let precision = ratio_pct(c.tp as f64, pred_text as f64, gt_text == 0);
    let recall = ratio_pct(c.tp as f64, gt_text as f64, pred_text == 0);
    Ok(harmonic(precision, recall))
}

/// Per-pixel weights for the pseudo F-measure.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoWeights {
    /// 1 on the skeleton of the ground-truth text, 0 elsewhere.
    pub recall: Vec<f64>,
    /// 0.5 on the one-pixel ring around ground-truth text, 1 elsewhere.
    pub precision: Vec<f64>,
}

impl PseudoWeights {
    pub fn from_gt(gt: &Tensor) -> Self {
        let (h, w) = (gt.dims()[0], gt.dims()[1]);
        let text: Vec<bool> = gt.data().iter().map(|&v| is_text(v)).collect();
        let sk = skeleton(&text, h, w);
        let grown = dilate3(&text, h, w);
        PseudoWeights {
            recall: sk.iter().map(|&s| f64::from(u8::from(s))).collect(),
            precision: grown
                .iter()
                .zip(&text)
                .map(|(&g, &t)| if g && !t { 0.5 } else { 1.0 })
                .collect(),
        }
    }

    pub fn uniform(n: usize) -> Self {
        PseudoWeights {
            recall: vec![1.0; n],
            precision: vec![1.0; n],
        }
    }
}

/// F-measure from weighted recall over ground-truth text and weighted
/// precision over predicted text.
pub fn pseudo_f_measure(pred: &Tensor, gt: &Tensor, weights: &PseudoWeights) -> Result<f64> {
    check_pair(pred, gt, "pseudo_f_measure")?;
    if weights.recall.len() != gt.numel() || weights.precision.len() != gt.numel() {
        return Err(Error::Config(format!(
            "pseudo F-measure weights cover {} pixels, image has {}",
            weights.recall.len(),
            gt.numel()
        )));
    }
    let (mut r_hit, mut r_all, mut p_hit, mut p_all) = (0.0, 0.0, 0.0, 0.0);
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        let (pt, gt_t) = (is_text(p), is_text(g));
        if gt_t {
            r_all += weights.recall[i];
            if pt {
                r_hit += weights.recall[i];
            }
        }
        if pt {
            p_all += weights.precision[i];
            if gt_t {
                p_hit += weights.precision[i];
            }
        }
    }
    let precision = ratio_pct(p_hit, p_all, r_all == 0.0);
    let recall = ratio_pct(r_hit, r_all, p_all == 0.0);
    Ok(harmonic(precision, recall))
}

/// 5×5 inverse Euclidean distance weights, centre 0, normalized to sum 1.
pub fn drd_weights() -> [[f64; 5]; 5] {
    let mut w = [[0.0; 5]; 5];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 2.0, j as f64 - 2.0);
            if di != 0.0 || dj != 0.0 {
                *v = 1.0 / (di * di + dj * dj).sqrt();
            }
        }
    }
    let total: f64 = w.iter().flatten().sum();
    w.iter_mut().flatten().for_each(|v| *v /= total);
    w
}

pub const DRD_BLOCK: usize = 8;

/// Number of 8×8 ground-truth blocks, edge remainders included, that
/// contain both classes.
pub fn nubn(gt: &Tensor) -> usize {
    let (h, w) = (gt.dims()[0], gt.dims()[1]);
    let mut count = 0;
    for by in (0..h).step_by(DRD_BLOCK) {
        for bx in (0..w).step_by(DRD_BLOCK) {
            let first = is_text(gt.data()[by * w + bx]);
            let mixed = (by..(by + DRD_BLOCK).min(h))
                .any(|y| (bx..(bx + DRD_BLOCK).min(w)).any(|x| is_text(gt.data()[y * w + x]) != first));
            count += usize::from(mixed);
        }
    }
    count
}

/// Distance reciprocal distortion. Each flipped pixel contributes the
/// weights of the in-bounds 5×5 neighbours whose ground truth differs from
/// the predicted value; the total is divided by [`nubn`]. Without
/// non-uniform blocks the result is 0 for a perfect prediction and `+∞`
/// otherwise.
pub fn drd(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check_pair(pred, gt, "drd")?;
    let (h, w) = (gt.dims()[0], gt.dims()[1]);
    let weights = drd_weights();
    let (p, g) = (pred.data(), gt.data());
    let mut total = 0.0;
    let mut flips = 0usize;
    for y in 0..h {
        for x in 0..w {
            let b = is_text(p[y * w + x]);
            if b == is_text(g[y * w + x]) {
                continue;
            }
            flips += 1;
            for (i, row) in weights.iter().enumerate() {
                for (j, &wt) in row.iter().enumerate() {
                    let (yy, xx) = (y as isize + i as isize - 2, x as isize + j as isize - 2);
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    if is_text(g[yy as usize * w + xx as usize]) != b {
                        total += wt;
                    }
                }
            }
        }
    }
    match (nubn(gt), flips) {
        (_, 0) => Ok(0.0),
        (0, _) => Ok(f64::INFINITY),
        (n, _) => Ok(total / n as f64),
    }
}
