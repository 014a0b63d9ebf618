use super::kernels::{self, UnfoldGeometry};
use super::{Shape, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`]. Only meaningful for the tape
/// that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for a user-supplied op: receives the input values, the
/// output value and the output gradient, returns one gradient per input.
pub type CustomBackward = Box<dyn Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    Transpose(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        stats: Vec<f64>,
    },
    Unfold(Var, UnfoldGeometry),
    Fold(Var, UnfoldGeometry),
    Sum(Var),
    Mean {
        x: Var,
        axis: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run record of a forward pass.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it
/// and a single reverse sweep in [`Tape::backward`] visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and gradient.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        debug_assert!(
            value.data().iter().all(|v| !v.is_nan()),
            "forward op produced NaN"
        );
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a trainable input.
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.push(Op::Leaf, value.clone(), true)
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, value: &Tensor) -> Var {
        self.push(Op::Leaf, value.clone(), false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &Shape {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`backward`](Self::backward); zeros
    /// when the node was not reached.
    pub fn grad(&self, v: Var) -> Tensor {
        let value = &self.nodes[v.0].value;
        let data = self
            .grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; value.numel()]);
        Tensor::from_shape(value.shape().clone(), data).expect("gradient length matches value")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.ndim() != 2 || sb.ndim() != 2 || sa.dims()[1] != sb.dims()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: sa.clone(),
                right: sb.clone(),
            });
        }
        let (m, k, n) = (sa.dims()[0], sa.dims()[1], sb.dims()[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// Fused `softmax(q·kᵀ)·v` over 2-D operands. The caller applies any
    /// score scaling to `q`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var, TensorError> {
        let (sq, sk, sv) = (self.shape(q), self.shape(k), self.shape(v));
        if sq.ndim() != 2 || sk.ndim() != 2 || sq.dims()[1] != sk.dims()[1] {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                left: sq.clone(),
                right: sk.clone(),
            });
        }
        if sv.ndim() != 2 || sv.dims()[0] != sk.dims()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                left: sk.clone(),
                right: sv.clone(),
            });
        }
        let (n, d, m, dv) = (sq.dims()[0], sq.dims()[1], sk.dims()[0], sv.dims()[1]);
        let (out, stats) =
            kernels::attention_forward(self.value(q).data(), self.value(k).data(), self.value(v).data(), n, m, d, dv);
        let value = Tensor::new(vec![n, dv], out)?;
        let rg = self.needs(&[q, k, v]);
        Ok(self.push(Op::Attention { q, k, v, stats }, value, rg))
    }

    fn broadcast_binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !sa.broadcasts_from(sb) {
            return Err(TensorError::ShapeMismatch {
                op: name,
                left: sa.clone(),
                right: sb.clone(),
            });
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let nb = bv.len();
        let data = av
            .chunks_exact(nb)
            .flat_map(|chunk| chunk.iter().zip(bv).map(|(&x, &y)| f(x, y)))
            .collect();
        Tensor::from_shape(sa.clone(), data)
    }

    /// Elementwise sum; `b` may repeat along the leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.broadcast_binary(a, b, "add", |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.broadcast_binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Sub(a, b), value, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.broadcast_binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.needs(&[x]);
        self.push(Op::Scale(x, factor), value, rg)
    }

    pub fn reshape(&mut self, x: Var, dims: impl Into<Vec<usize>>) -> Result<Var, TensorError> {
        let value = self.value(x).reshape(dims)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::Reshape(x), value, rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let shape = self.shape(x).clone();
        if shape.ndim() < 2 {
            return Err(TensorError::InvalidShape(format!(
                "transpose needs at least 2 axes, got {shape}"
            )));
        }
        let nd = shape.ndim();
        let (rows, cols) = (shape.dims()[nd - 2], shape.dims()[nd - 1]);
        let batch = shape.numel() / (rows * cols);
        let data = kernels::transpose_batched(self.value(x).data(), batch, rows, cols);
        let mut dims = shape.dims().to_vec();
        dims.swap(nd - 2, nd - 1);
        let value = Tensor::new(dims, data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::Transpose(x), value, rg))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(x).clone();
        if axis >= shape.ndim() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let (outer, len, inner) = shape.split_at_axis(axis);
        let data = kernels::softmax(self.value(x).data(), outer, len, inner);
        let value = Tensor::from_shape(shape, data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::Softmax { x, axis }, value, rg))
    }

    /// Normalizes each row over the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, TensorError> {
        let shape = self.shape(x).clone();
        let d = shape.last();
        for p in [gamma, beta] {
            if self.shape(p).dims() != [d] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: shape,
                    right: self.shape(p).clone(),
                });
            }
        }
        let rows = shape.numel() / d;
        let xs = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut normalized = vec![0.0; xs.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xs.len()];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            rstd[r] = inv;
            for j in 0..d {
                let n = (row[j] - mean) * inv;
                normalized[r * d + j] = n;
                out[r * d + j] = n * g[j] + b[j];
            }
        }
        let value = Tensor::from_shape(shape, out)?;
        let rg = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                rstd,
            },
            value,
            rg,
        ))
    }

    /// Exact erf-based GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(kernels::gelu);
        let rg = self.needs(&[x]);
        self.push(Op::Gelu(x), value, rg)
    }

    /// Sliding-window unfold of a `C×H×W` array into `L×(C·k·k)` rows with
    /// zero padding.
    pub fn unfold(&mut self, x: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var, TensorError> {
        let shape = self.shape(x).clone();
        if shape.ndim() != 3 {
            return Err(TensorError::InvalidShape(format!(
                "unfold expects C×H×W, got {shape}"
            )));
        }
        let d = shape.dims();
        let geom = UnfoldGeometry::new(d[0], d[1], d[2], kernel, stride, padding)?;
        let data = geom.unfold(self.value(x).data());
        let value = Tensor::new(vec![geom.windows(), geom.row_len()], data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::Unfold(x, geom), value, rg))
    }

    /// Scatter-add adjoint of [`unfold`](Self::unfold).
    #[allow(clippy::too_many_arguments)]
    pub fn fold(
        &mut self,
        rows: Var,
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let geom = UnfoldGeometry::new(channels, height, width, kernel, stride, padding)?;
        let shape = self.shape(rows).clone();
        if shape.dims() != [geom.windows(), geom.row_len()] {
            return Err(TensorError::ShapeMismatch {
                op: "fold",
                left: shape,
                right: Shape::new(vec![geom.windows(), geom.row_len()])?,
            });
        }
        let data = geom.fold(self.value(rows).data());
        let value = Tensor::new(vec![channels, height, width], data)?;
        let rg = self.needs(&[rows]);
        Ok(self.push(Op::Fold(rows, geom), value, rg))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Op::Sum(x), Tensor::scalar(total), rg)
    }

    /// Mean of all elements as a scalar.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean along `axis`; the axis is removed from the output shape.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.shape(x).clone();
        if axis >= shape.ndim() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let (outer, len, inner) = shape.split_at_axis(axis);
        let xs = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += xs[(o * len + a) * inner + i];
                }
            }
        }
        for v in &mut out {
            *v /= len as f64;
        }
        let mut dims = shape.dims().to_vec();
        dims.remove(axis);
        if dims.is_empty() {
            dims.push(1);
        }
        let value = Tensor::new(dims, out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::Mean { x, axis }, value, rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = inputs
            .first()
            .map(|&v| self.shape(v).clone())
            .ok_or_else(|| TensorError::InvalidShape("concat of zero tensors".into()))?;
        if axis >= first.ndim() {
            return Err(TensorError::InvalidAxis { axis, shape: first });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.ndim() == first.ndim()
                && s.dims()
                    .iter()
                    .zip(first.dims())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: first,
                    right: s.clone(),
                });
            }
            total += s.dims()[axis];
        }
        let (outer, _, inner) = first.split_at_axis(axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v).dims()[axis];
                let chunk = len * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut dims = first.dims().to_vec();
        dims[axis] = total;
        let value = Tensor::new(dims, data)?;
        let rg = self.needs(inputs);
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
            rg,
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        let shape = self.shape(x).clone();
        if axis >= shape.ndim() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        if start >= end || end > shape.dims()[axis] {
            return Err(TensorError::InvalidShape(format!(
                "slice {start}..{end} out of range for axis {axis} of {shape}"
            )));
        }
        let (outer, len, inner) = shape.split_at_axis(axis);
        let xs = self.value(x).data();
        let width = end - start;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            data.extend_from_slice(&xs[base..base + width * inner]);
        }
        let mut dims = shape.dims().to_vec();
        dims[axis] = width;
        let value = Tensor::new(dims, data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::Slice { x, axis, start }, value, rg))
    }

    /// Records an op whose forward value is already computed.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: CustomBackward) -> Var {
        let rg = self.needs(inputs);
        self.push(
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            value,
            rg,
        )
    }

    /// Reverse sweep from a scalar `loss`, populating gradients for every
    /// node that requires one. Previous gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let loss_shape = self.shape(loss);
        if !loss_shape.is_scalar() {
            return Err(TensorError::NonScalarLoss(loss_shape.clone()));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);

        let Tape { nodes, grads } = self;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            let mut send = |v: Var, delta: Vec<f64>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (sa, sb) = (val(*a).dims(), val(*b).dims());
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    if nodes[a.0].requires_grad {
                        let bt = kernels::transpose(val(*b).data(), k, n);
                        send(*a, kernels::matmul(&g, &bt, m, n, k));
                    }
                    if nodes[b.0].requires_grad {
                        let at = kernels::transpose(val(*a).data(), m, k);
                        send(*b, kernels::matmul(&at, &g, k, m, n));
                    }
                }
                Op::Add(a, b) => {
                    let nb = val(*b).numel();
                    if nodes[b.0].requires_grad {
                        send(*b, reduce_repeats(&g, nb));
                    }
                    send(*a, g);
                }
                Op::Sub(a, b) => {
                    let nb = val(*b).numel();
                    if nodes[b.0].requires_grad {
                        send(*b, reduce_repeats(&g, nb).into_iter().map(|v| -v).collect());
                    }
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a).data(), val(*b).data());
                    let nb = bv.len();
                    if nodes[a.0].requires_grad {
                        let da = g
                            .chunks_exact(nb)
                            .flat_map(|c| c.iter().zip(bv).map(|(gv, y)| gv * y))
                            .collect();
                        send(*a, da);
                    }
                    if nodes[b.0].requires_grad {
                        let prod: Vec<f64> = g.iter().zip(av).map(|(gv, x)| gv * x).collect();
                        send(*b, reduce_repeats(&prod, nb));
                    }
                }
                Op::Scale(x, f) => send(*x, g.iter().map(|v| v * f).collect()),
                Op::Reshape(x) => send(*x, g),
                Op::Transpose(x) => {
                    let s = val(*x).dims();
                    let nd = s.len();
                    let (rows, cols) = (s[nd - 2], s[nd - 1]);
                    let batch = val(*x).numel() / (rows * cols);
                    send(*x, kernels::transpose_batched(&g, batch, cols, rows));
                }
                Op::Softmax { x, axis } => {
                    let (outer, len, inner) = node.value.shape().split_at_axis(*axis);
                    send(
                        *x,
                        kernels::softmax_backward(node.value.data(), &g, outer, len, inner),
                    );
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    rstd,
                } => {
                    let d = node.value.shape().last();
                    let gv = val(*gamma).data();
                    if nodes[gamma.0].requires_grad {
                        let prod: Vec<f64> = g.iter().zip(normalized).map(|(a, b)| a * b).collect();
                        send(*gamma, reduce_repeats(&prod, d));
                    }
                    if nodes[beta.0].requires_grad {
                        send(*beta, reduce_repeats(&g, d));
                    }
                    if nodes[x.0].requires_grad {
                        let mut dx = vec![0.0; g.len()];
                        for (r, &inv) in rstd.iter().enumerate() {
                            let span = r * d..(r + 1) * d;
                            let gr = &g[span.clone()];
                            let nr = &normalized[span.clone()];
                            let dn: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                            let mean_dn = dn.iter().sum::<f64>() / d as f64;
                            let mean_dn_n =
                                dn.iter().zip(nr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                            for j in 0..d {
                                dx[r * d + j] = inv * (dn[j] - mean_dn - nr[j] * mean_dn_n);
                            }
                        }
                        send(*x, dx);
                    }
                }
                Op::Gelu(x) => {
                    let xv = val(*x).data();
                    send(
                        *x,
                        g.iter()
                            .zip(xv)
                            .map(|(gv, &v)| gv * kernels::gelu_grad(v))
                            .collect(),
                    );
                }
                Op::Attention { q, k, v, stats } => {
                    let (n, d) = (val(*q).dims()[0], val(*q).dims()[1]);
                    let (m, dv) = (val(*v).dims()[0], val(*v).dims()[1]);
                    let (dq, dk, dval) = kernels::attention_backward(
                        val(*q).data(),
                        val(*k).data(),
                        val(*v).data(),
                        stats,
                        &g,
                        n,
                        m,
                        d,
                        dv,
                    );
                    send(*q, dq);
                    send(*k, dk);
                    send(*v, dval);
                }
                Op::Unfold(x, geom) => send(*x, geom.fold(&g)),
                Op::Fold(x, geom) => send(*x, geom.unfold(&g)),
                Op::Sum(x) => send(*x, vec![g[0]; val(*x).numel()]),
                Op::Mean { x, axis } => {
                    let (outer, len, inner) = val(*x).shape().split_at_axis(*axis);
                    let mut dx = vec![0.0; outer * len * inner];
                    let scale = 1.0 / len as f64;
                    for o in 0..outer {
                        for a in 0..len {
                            for j in 0..inner {
                                dx[(o * len + a) * inner + j] = g[o * inner + j] * scale;
                            }
                        }
                    }
                    send(*x, dx);
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = node.value.shape().split_at_axis(*axis);
                    let mut offset = 0;
                    for &v in inputs {
                        let len = val(v).dims()[*axis];
                        if nodes[v.0].requires_grad {
                            let mut dv = Vec::with_capacity(outer * len * inner);
                            for o in 0..outer {
                                let base = (o * total + offset) * inner;
                                dv.extend_from_slice(&g[base..base + len * inner]);
                            }
                            send(v, dv);
                        }
                        offset += len;
                    }
                }
                Op::Slice { x, axis, start } => {
                    let (outer, len, inner) = val(*x).shape().split_at_axis(*axis);
                    let width = node.value.dims()[*axis];
                    let mut dx = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        let dst = (o * len + start) * inner;
                        let src = o * width * inner;
                        dx[dst..dst + width * inner].copy_from_slice(&g[src..src + width * inner]);
                    }
                    send(*x, dx);
                }
                Op::Custom { inputs, backward } => {
                    let in_vals: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                    let deltas = backward(&in_vals, &node.value, &g);
                    for (&v, delta) in inputs.iter().zip(deltas) {
                        send(v, delta);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Sums `g` over its leading repetitions of a block of length `n`.
fn reduce_repeats(g: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for chunk in g.chunks_exact(n) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}
