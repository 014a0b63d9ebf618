//! Slice-level numeric kernels shared by the forward and backward passes.
//!
//! Every reduction runs in a fixed order so results are bit-reproducible.

use super::TensorError;

const MR: usize = 4;
const NR: usize = 8;
const KC: usize = 256;
const NC: usize = 256;

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
///
/// Cache-blocked with a 4×8 register tile. On x86-64 with AVX2 and FMA the
/// tile uses fused multiply-adds, so results are reproducible per machine
/// but may differ in the last bits from the portable path.
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() == m * k && b.len() == k * n && c.len() == m * n);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the features were detected at runtime.
            unsafe { simd::matmul_acc(a, b, c, m, k, n) };
            return;
        }
    }
    matmul_blocked(a, b, c, m, k, n, tile_portable);
}

type Tile = fn(&[f64], usize, &[f64], usize, &mut [f64], usize, usize);

/// `c[0..4, 0..8] += a[0..4, 0..kc] · b[0..kc, 0..8]` with leading dimensions.
fn tile_portable(a: &[f64], lda: usize, b: &[f64], ldb: usize, c: &mut [f64], ldc: usize, kc: usize) {
    let mut acc = [[0.0; NR]; MR];
    for p in 0..kc {
        let b_row = &b[p * ldb..p * ldb + NR];
        for (r, acc_row) in acc.iter_mut().enumerate() {
            let av = a[r * lda + p];
            for (x, bv) in acc_row.iter_mut().zip(b_row) {
                *x += av * bv;
            }
        }
    }
    for (r, acc_row) in acc.iter().enumerate() {
        for (cv, x) in c[r * ldc..r * ldc + NR].iter_mut().zip(acc_row) {
            *cv += x;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn tile_edge(a: &[f64], lda: usize, b: &[f64], ldb: usize, c: &mut [f64], ldc: usize, rows: usize, cols: usize, kc: usize) {
    for r in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for p in 0..kc {
                acc += a[r * lda + p] * b[p * ldb + j];
            }
            c[r * ldc + j] += acc;
        }
    }
}

#[inline(always)]
fn matmul_blocked(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, tile: Tile) {
    for jc in (0..n).step_by(NC) {
        let j_end = (jc + NC).min(n);
        for pc in (0..k).step_by(KC) {
            let kc = (pc + KC).min(k) - pc;
            for i in (0..m).step_by(MR) {
                let rows = (m - i).min(MR);
                let a_blk = &a[i * k + pc..];
                for j in (jc..j_end).step_by(NR) {
                    let cols = (j_end - j).min(NR);
                    let b_blk = &b[pc * n + j..];
                    let c_blk = &mut c[i * n + j..];
                    if rows == MR && cols == NR {
                        tile(a_blk, k, b_blk, n, c_blk, n, kc);
                    } else {
                        tile_edge(a_blk, k, b_blk, n, c_blk, n, rows, cols, kc);
                    }
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use std::arch::x86_64::*;

    use super::{exp_poly, matmul_blocked, EXP_COEFFS, EXP_LN2_HI, EXP_LN2_LO, EXP_SHIFTER, MR, NR};

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
        matmul_blocked(a, b, c, m, k, n, tile);
    }

    fn tile(a: &[f64], lda: usize, b: &[f64], ldb: usize, c: &mut [f64], ldc: usize, kc: usize) {
        assert!(a.len() >= (MR - 1) * lda + kc && b.len() >= (kc.max(1) - 1) * ldb + NR);
        assert!(c.len() >= (MR - 1) * ldc + NR);
        // SAFETY: bounds asserted above; only reached after feature detection.
        unsafe { tile_fma(a.as_ptr(), lda, b.as_ptr(), ldb, c.as_mut_ptr(), ldc, kc) }
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn exp_shifted(x: &mut [f64], shift: f64) {
        let chunks = x.len() / 4;
        let (lo, hi) = (_mm256_set1_pd(-708.0), _mm256_set1_pd(709.0));
        let shifter = _mm256_set1_pd(EXP_SHIFTER);
        let log2e = _mm256_set1_pd(std::f64::consts::LOG2_E);
        let (ln2_hi, ln2_lo) = (_mm256_set1_pd(EXP_LN2_HI), _mm256_set1_pd(EXP_LN2_LO));
        let sub = _mm256_set1_pd(shift);
        let bias = _mm256_set1_epi64x(1023i64.wrapping_sub(EXP_SHIFTER.to_bits() as i64));
        let ptr = x.as_mut_ptr();
        for i in 0..chunks {
            let v = _mm256_sub_pd(_mm256_loadu_pd(ptr.add(4 * i)), sub);
            // max/min return their second operand on NaN, so NaN passes through.
            let v = _mm256_min_pd(hi, _mm256_max_pd(lo, v));
            let t = _mm256_fmadd_pd(v, log2e, shifter);
            let kf = _mm256_sub_pd(t, shifter);
            let r = _mm256_fnmadd_pd(kf, ln2_hi, v);
            let r = _mm256_fnmadd_pd(kf, ln2_lo, r);
            let mut p = _mm256_set1_pd(EXP_COEFFS[0]);
            for &c in &EXP_COEFFS[1..] {
                p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c));
            }
            let bits = _mm256_slli_epi64::<52>(_mm256_add_epi64(_mm256_castpd_si256(t), bias));
            _mm256_storeu_pd(ptr.add(4 * i), _mm256_mul_pd(p, _mm256_castsi256_pd(bits)));
        }
        for v in &mut x[4 * chunks..] {
            *v = exp_poly(*v - shift);
        }
    }

    #[target_feature(enable = "avx2,fma")]
    unsafe fn tile_fma(a: *const f64, lda: usize, b: *const f64, ldb: usize, c: *mut f64, ldc: usize, kc: usize) {
        let mut acc = [[_mm256_setzero_pd(); 2]; MR];
        for p in 0..kc {
            let b0 = _mm256_loadu_pd(b.add(p * ldb));
            let b1 = _mm256_loadu_pd(b.add(p * ldb + 4));
            for (r, acc_row) in acc.iter_mut().enumerate() {
                let av = _mm256_broadcast_sd(&*a.add(r * lda + p));
                acc_row[0] = _mm256_fmadd_pd(av, b0, acc_row[0]);
                acc_row[1] = _mm256_fmadd_pd(av, b1, acc_row[1]);
            }
        }
        for (r, acc_row) in acc.iter().enumerate() {
            let dst = c.add(r * ldc);
            _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), acc_row[0]));
            _mm256_storeu_pd(dst.add(4), _mm256_add_pd(_mm256_loadu_pd(dst.add(4)), acc_row[1]));
        }
    }
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// Transposes a row-major `rows×cols` matrix into `cols×rows`.
pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    const BLOCK: usize = 32;
    let mut out = vec![0.0; rows * cols];
    for ib in (0..rows).step_by(BLOCK) {
        for jb in (0..cols).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(rows) {
                for j in jb..(jb + BLOCK).min(cols) {
                    out[j * rows + i] = a[i * cols + j];
                }
            }
        }
    }
    out
}

/// Transposes the last two axes of a stack of `batch` matrices.
pub fn transpose_batched(a: &[f64], batch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let size = rows * cols;
    let mut out = Vec::with_capacity(a.len());
    for b in 0..batch {
        out.extend(transpose(&a[b * size..(b + 1) * size], rows, cols));
    }
    out
}

/// Softmax along the middle axis of an `(outer, len, inner)` decomposition.
pub fn softmax(x: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    if inner == 1 {
        y.copy_from_slice(x);
        softmax_rows_in_place(&mut y, len);
        return y;
    }
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * len + a) * inner + i;
            let max = (0..len).map(|a| x[idx(a)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for a in 0..len {
                let e = (x[idx(a)] - max).exp();
                y[idx(a)] = e;
                sum += e;
            }
            for a in 0..len {
                y[idx(a)] /= sum;
            }
        }
    }
    y
}

/// Backward of softmax: `dx = y ⊙ (dy − Σ dy⊙y)` along the softmax axis.
pub fn softmax_backward(y: &[f64], dy: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut dx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * len + a) * inner + i;
            let dot: f64 = (0..len).map(|a| dy[idx(a)] * y[idx(a)]).sum();
            for a in 0..len {
                dx[idx(a)] = y[idx(a)] * (dy[idx(a)] - dot);
            }
        }
    }
    dx
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Query rows processed together by the fused attention kernels.
const ATTENTION_CHUNK: usize = 32;

fn softmax_rows_in_place(rows: &mut [f64], len: usize) {
    for row in rows.chunks_exact_mut(len) {
        let max = lane_max(row);
        exp_shifted_in_place(row, max);
        let inv = 1.0 / lane_sum(row);
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Sum with four interleaved accumulators; fixed order, vectorizable.
fn lane_sum(x: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let chunks = x.chunks_exact(4);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for (l, v) in lanes.iter_mut().zip(c) {
            *l += v;
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Dot product with the same accumulation order as [`lane_sum`].
fn lane_dot(x: &[f64], y: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for i in 0..4 {
            lanes[i] += a[i] * b[i];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// In-place `exp` for softmax arguments (`x ≤ 0`), accurate to a few ulp
/// on `[-708, 709]`; smaller inputs saturate at `exp(-708)`. NaN propagates.
pub fn exp_in_place(x: &mut [f64]) {
    exp_shifted_in_place(x, 0.0);
}

/// `x ← exp(x − shift)` elementwise.
pub fn exp_shifted_in_place(x: &mut [f64], shift: f64) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the features were detected at runtime.
            unsafe { simd::exp_shifted(x, shift) };
            return;
        }
    }
    x.iter_mut().for_each(|v| *v = exp_poly(*v - shift));
}

/// Maximum with four interleaved lanes; NaN inputs are not screened.
fn lane_max(x: &[f64]) -> f64 {
    let mut lanes = [f64::NEG_INFINITY; 4];
    let chunks = x.chunks_exact(4);
    let tail = chunks.remainder().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for c in chunks {
        for (l, &v) in lanes.iter_mut().zip(c) {
            *l = if v > *l { v } else { *l };
        }
    }
    lanes.iter().copied().fold(tail, f64::max)
}

const EXP_SHIFTER: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52
const EXP_LN2_HI: f64 = 6.931_471_803_691_238e-1;
const EXP_LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// Taylor coefficients `1/13!, …, 1/1!, 1/0!` for Horner evaluation.
const EXP_COEFFS: [f64; 14] = [
    1.0 / 6_227_020_800.0,
    1.0 / 479_001_600.0,
    1.0 / 39_916_800.0,
    1.0 / 3_628_800.0,
    1.0 / 362_880.0,
    1.0 / 40_320.0,
    1.0 / 5_040.0,
    1.0 / 720.0,
    1.0 / 120.0,
    1.0 / 24.0,
    1.0 / 6.0,
    0.5,
    1.0,
    1.0,
];

/// `exp(x) = 2^k · e^r` with `|r| ≤ ln2/2` and a degree-13 Taylor polynomial.
#[inline(always)]
fn exp_poly(x: f64) -> f64 {
    let xc = x.clamp(-708.0, 709.0);
    let t = xc * std::f64::consts::LOG2_E + EXP_SHIFTER;
    let kf = t - EXP_SHIFTER;
    let ki = t.to_bits().wrapping_sub(EXP_SHIFTER.to_bits()) as i64;
    let r = (xc - kf * EXP_LN2_HI) - kf * EXP_LN2_LO;
    let p = EXP_COEFFS[1..].iter().fold(EXP_COEFFS[0], |p, &c| p * r + c);
    p * f64::from_bits(((ki + 1023) as u64) << 52)
}

/// Attention weights for query rows `q_rows` against `kt: d×m`, written to
/// `p`. With `stats = None` the row max and reciprocal sum are computed and
/// returned; otherwise the given ones are reused, reproducing earlier
/// weights bit for bit.
fn weights_chunk(q_rows: &[f64], kt: &[f64], d: usize, m: usize, p: &mut [f64], stats: &mut [f64], fresh: bool) {
    let rows = q_rows.len() / d.max(1);
    p.fill(0.0);
    matmul_acc(q_rows, kt, p, rows, d, m);
    for (row, st) in p.chunks_exact_mut(m).zip(stats.chunks_exact_mut(2)) {
        if fresh {
            st[0] = lane_max(row);
        }
        exp_shifted_in_place(row, st[0]);
        if fresh {
            st[1] = 1.0 / lane_sum(row);
        }
        let inv = st[1];
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Full `n×m` attention weight matrix `softmax(q·kᵀ)` row by row.
pub fn attention_weights(q: &[f64], k: &[f64], n: usize, m: usize, d: usize) -> Vec<f64> {
    let kt = transpose(k, m, d);
    let mut probs = vec![0.0; n * m];
    let mut stats = vec![0.0; 2 * n];
    for (r0, (p, st)) in probs
        .chunks_mut(ATTENTION_CHUNK * m)
        .zip(stats.chunks_mut(2 * ATTENTION_CHUNK))
        .enumerate()
    {
        let r0 = r0 * ATTENTION_CHUNK;
        let rows = p.len() / m;
        weights_chunk(&q[r0 * d..(r0 + rows) * d], &kt, d, m, p, st, true);
    }
    probs
}

/// `softmax(q·kᵀ)·v` for `q: n×d`, `k: m×d`, `v: m×dv`, computed in chunks
/// of query rows. Returns the `n×dv` output and per-row softmax statistics
/// (max, reciprocal sum) from which the backward pass rebuilds the weights.
pub fn attention_forward(q: &[f64], k: &[f64], v: &[f64], n: usize, m: usize, d: usize, dv: usize) -> (Vec<f64>, Vec<f64>) {
    let kt = transpose(k, m, d);
    let mut stats = vec![0.0; 2 * n];
    let mut out = vec![0.0; n * dv];
    let mut buf = vec![0.0; ATTENTION_CHUNK * m];
    for r0 in (0..n).step_by(ATTENTION_CHUNK) {
        let r1 = (r0 + ATTENTION_CHUNK).min(n);
        let rows = r1 - r0;
        let p = &mut buf[..rows * m];
        weights_chunk(&q[r0 * d..r1 * d], &kt, d, m, p, &mut stats[2 * r0..2 * r1], true);
        matmul_acc(p, v, &mut out[r0 * dv..r1 * dv], rows, m, dv);
    }
    (out, stats)
}

/// Gradients `(dq, dk, dv)` of [`attention_forward`] given its statistics.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    stats: &[f64],
    dout: &[f64],
    n: usize,
    m: usize,
    d: usize,
    dv: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let kt = transpose(k, m, d);
    let vt = transpose(v, m, dv);
    let mut stats = stats.to_vec();
    let mut dq = vec![0.0; n * d];
    let mut dkt = vec![0.0; d * m];
    let mut dvt = vec![0.0; dv * m];
    let mut p_buf = vec![0.0; ATTENTION_CHUNK * m];
    let mut ds_buf = vec![0.0; ATTENTION_CHUNK * m];
    for r0 in (0..n).step_by(ATTENTION_CHUNK) {
        let r1 = (r0 + ATTENTION_CHUNK).min(n);
        let rows = r1 - r0;
        let p = &mut p_buf[..rows * m];
        weights_chunk(&q[r0 * d..r1 * d], &kt, d, m, p, &mut stats[2 * r0..2 * r1], false);
        let go = &dout[r0 * dv..r1 * dv];
        let ds = &mut ds_buf[..rows * m];
        ds.fill(0.0);
        matmul_acc(go, &vt, ds, rows, dv, m);
        for (ds_row, p_row) in ds.chunks_exact_mut(m).zip(p.chunks_exact(m)) {
            let dot = lane_dot(ds_row, p_row);
            for (s, &pv) in ds_row.iter_mut().zip(p_row) {
                *s = pv * (*s - dot);
            }
        }
        matmul_acc(ds, k, &mut dq[r0 * d..r1 * d], rows, m, d);
        matmul_acc(&transpose(&q[r0 * d..r1 * d], rows, d), ds, &mut dkt, d, rows, m);
        matmul_acc(&transpose(go, rows, dv), p, &mut dvt, dv, rows, m);
    }
    (dq, transpose(&dkt, d, m), transpose(&dvt, dv, m))
}

/// Window geometry of a 2-D sliding-window unfold over a `C×H×W` array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnfoldGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl UnfoldGeometry {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        let out_h = output_side(height, kernel, stride, padding);
        let out_w = output_side(width, kernel, stride, padding);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) if channels > 0 => Ok(UnfoldGeometry {
                channels,
                height,
                width,
                kernel,
                stride,
                padding,
                out_h,
                out_w,
            }),
            _ => Err(TensorError::Window {
                height,
                width,
                kernel,
                stride,
                padding,
            }),
        }
    }

    /// Number of windows.
    pub fn windows(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Length of one unfolded row: `C·k·k`.
    pub fn row_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Visits `(row_index, column_index, source_index)` for every in-bounds
    /// tap; padded taps are skipped.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let k = self.kernel;
        let row_len = self.row_len();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = oy * self.out_w + ox;
                for c in 0..self.channels {
                    for ky in 0..k {
                        let y = (oy * self.stride + ky) as isize - self.padding as isize;
                        if y < 0 || y as usize >= self.height {
                            continue;
                        }
                        for kx in 0..k {
                            let x = (ox * self.stride + kx) as isize - self.padding as isize;
                            if x < 0 || x as usize >= self.width {
                                continue;
                            }
                            let col = (c * k + ky) * k + kx;
                            let src = (c * self.height + y as usize) * self.width + x as usize;
                            f(row * row_len, col, src);
                        }
                    }
                }
            }
        }
    }

    pub fn unfold(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.windows() * self.row_len()];
        self.for_each_tap(|row_start, col, src| out[row_start + col] = x[src]);
        out
    }

    /// Scatter-adds unfolded rows back onto the `C×H×W` grid.
    pub fn fold(&self, rows: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.channels * self.height * self.width];
        self.for_each_tap(|row_start, col, src| out[src] += rows[row_start + col]);
        out
    }

    /// How many windows cover each input position (zero outside any window).
    pub fn overlap_counts(&self) -> Vec<f64> {
        self.fold(&vec![1.0; self.windows() * self.row_len()])
    }
}

/// `floor((side + 2p − k)/s) + 1`, or `None` when the window does not fit.
pub fn output_side(side: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = side + 2 * padding;
    if kernel == 0 || stride == 0 || side == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn blocked_matmul_matches_triple_loop() {
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 2), (4, 8, 7), (2, 9, 3), (9, 300, 17), (8, 16, 520), (5, 0, 3)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
            let fast = matmul(&a, &b, m, k, n);
            let slow = naive_matmul(&a, &b, m, k, n);
            for (x, y) in fast.iter().zip(&slow) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn portable_path_matches_triple_loop() {
        let (m, k, n) = (13, 270, 21);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![1.0; m * n];
        matmul_blocked(&a, &b, &mut c, m, k, n, tile_portable);
        for (x, y) in c.iter().zip(naive_matmul(&a, &b, m, k, n)) {
            assert!((x - 1.0 - y).abs() < 1e-11);
        }
    }

    #[test]
    fn exp_matches_std_to_a_few_ulp() {
        let mut xs: Vec<f64> = (0..20_000).map(|i| -700.0 + i as f64 * 0.0351).collect();
        xs.extend([0.0, -0.0, -1e-300, -0.5 * std::f64::consts::LN_2, 1.0]);
        let mut ys = xs.clone();
        exp_in_place(&mut ys);
        for (x, y) in xs.iter().zip(&ys) {
            let e = x.exp();
            assert!(((y - e) / e).abs() <= 4.0 * f64::EPSILON, "exp({x}) = {y}, std {e}");
        }
        let mut edge = [f64::NAN, -1e4];
        exp_in_place(&mut edge);
        assert!(edge[0].is_nan());
        assert!(edge[1] >= 0.0 && edge[1] < 1e-300);
    }

    #[test]
    fn fused_attention_rows_are_stochastic() {
        let (n, d) = (70, 3);
        let q: Vec<f64> = (0..n * d).map(|i| (i as f64 * 0.7).sin() * 5.0).collect();
        let probs = attention_weights(&q, &q, n, n, d);
        for row in probs.chunks_exact(n) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let a: Vec<f64> = (0..70).map(f64::from).collect();
        let t = transpose(&a, 7, 10);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[7], 1.0);
        assert_eq!(transpose(&t, 10, 7), a);
    }

    #[test]
    fn output_side_arithmetic() {
        assert_eq!(output_side(256, 7, 4, 2), Some(64));
        assert_eq!(output_side(64, 3, 2, 1), Some(32));
        assert_eq!(output_side(32, 3, 2, 1), Some(16));
        assert_eq!(output_side(2, 7, 4, 2), None);
    }
}
