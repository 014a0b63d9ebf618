//! Pre-norm transformer blocks: the encoder stack, the encoder-to-decoder
//! bridge and the decoder stack.
//!
//! Each block computes `y = x + MSA(LN(x))` followed by
//! `out = y + MLP(LN(y))`, where the MLP is `fc2(GELU(fc1(·)))`.
//! Attention projections carry no biases; the MLP layers do.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Graph, LayerNorm, Linear, ParamId, ParamStore};
use crate::tensor::{Tensor, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodecConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub n_heads: usize,
    pub enc_dim: usize,
    pub dec_dim: usize,
    pub mlp_dim: usize,
}

impl CodecConfig {
    /// Encoder 12×768, decoder 1×64, 8 heads, MLP width 2048.
    pub fn paper() -> Self {
        CodecConfig {
            enc_layers: 12,
            dec_layers: 1,
            n_heads: 8,
            enc_dim: 768,
            dec_dim: 64,
            mlp_dim: 2048,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.enc_dim == 0 || self.dec_dim == 0 || self.mlp_dim == 0 {
            return Err(Error::Config(format!("codec dimensions must be positive: {self:?}")));
        }
        for (label, dim) in [("enc_dim", self.enc_dim), ("dec_dim", self.dec_dim)] {
            if dim % self.n_heads != 0 {
                return Err(Error::Config(format!(
                    "{label} {dim} is not divisible by {} heads",
                    self.n_heads
                )));
            }
        }
        Ok(())
    }
}

/// Weights of one attention + MLP block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub dim: usize,
}

impl BlockParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        mlp_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut square = |suffix: &str, rng: &mut R| {
            store.add(format!("{name}.attn.{suffix}"), Tensor::uniform(vec![dim, dim], bound, rng))
        };
        let wq = square("wq", rng);
        let wk = square("wk", rng);
        let wv = square("wv", rng);
        let wo = square("wo", rng);
        let ln1 = LayerNorm::init(store, &format!("{name}.ln1"), dim);
        let ln2 = LayerNorm::init(store, &format!("{name}.ln2"), dim);
        let fc1 = Linear::init(store, &format!("{name}.mlp.fc1"), dim, mlp_dim, true, rng);
        let fc2 = Linear::init(store, &format!("{name}.mlp.fc2"), mlp_dim, dim, true, rng);
        BlockParams {
            wq,
            wk,
            wv,
            wo,
            ln1,
            ln2,
            fc1,
            fc2,
            dim,
        }
    }

    /// Every learned array of the block, in registration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.wq, self.wk, self.wv, self.wo];
        ids.extend([self.ln1.gamma, self.ln1.beta, self.ln2.gamma, self.ln2.beta]);
        for lin in [self.fc1, self.fc2] {
            ids.push(lin.weight);
            ids.extend(lin.bias);
        }
        ids
    }
}

fn check_dim(g: &Graph, x: Var, dim: usize, what: &str) -> Result<()> {
    let shape = g.tape.shape(x);
    if shape.ndim() != 2 || shape.last() != dim {
        return Err(Error::Config(format!(
            "{what} expects n×{dim} tokens, got {shape}"
        )));
    }
    Ok(())
}

/// Multi-head scaled dot-product self-attention over `n×d` tokens.
///
/// Heads split the projected features into contiguous `d/n_heads` slices;
/// scores are scaled by `1/√(d/n_heads)` and head outputs are concatenated
/// before the output projection.
pub fn multi_head_attention(g: &mut Graph, x: Var, p: &BlockParams, n_heads: usize) -> Result<Var> {
    check_dim(g, x, p.dim, "attention")?;
    if n_heads == 0 || !p.dim.is_multiple_of(n_heads) {
        return Err(Error::Config(format!(
            "attention dim {} is not divisible by {n_heads} heads",
            p.dim
        )));
    }
    let head_dim = p.dim / n_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let (wq, wk, wv, wo) = (g.param(p.wq), g.param(p.wk), g.param(p.wv), g.param(p.wo));
    let q = g.tape.matmul(x, wq)?;
    let q = g.tape.scale(q, scale);
    let k = g.tape.matmul(x, wk)?;
    let v = g.tape.matmul(x, wv)?;

    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            let span = (h * head_dim, (h + 1) * head_dim);
            (
                g.tape.slice(q, 1, span.0, span.1)?,
                g.tape.slice(k, 1, span.0, span.1)?,
                g.tape.slice(v, 1, span.0, span.1)?,
            )
        };
        heads.push(g.tape.attention(qh, kh, vh)?);
    }
    let merged = if n_heads == 1 {
        heads[0]
    } else {
        g.tape.concat(&heads, 1)?
    };
    Ok(g.tape.matmul(merged, wo)?)
}

/// Attention weights of each head, for inspection.
pub fn attention_weights(g: &mut Graph, x: Var, p: &BlockParams, n_heads: usize) -> Result<Vec<Tensor>> {
    check_dim(g, x, p.dim, "attention")?;
    let head_dim = p.dim / n_heads;
    let (wq, wk) = (g.param(p.wq), g.param(p.wk));
    let normed = p.ln1.forward(g, x)?;
    let q = g.tape.matmul(normed, wq)?;
    let q = g.tape.scale(q, 1.0 / (head_dim as f64).sqrt());
    let k = g.tape.matmul(normed, wk)?;
    let mut out = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.tape.slice(q, 1, h * head_dim, (h + 1) * head_dim)?;
        let kh = g.tape.slice(k, 1, h * head_dim, (h + 1) * head_dim)?;
        let kt = g.tape.transpose(kh)?;
        let scores = g.tape.matmul(qh, kt)?;
        let w = g.tape.softmax(scores, 1)?;
        out.push(g.tape.value(w).clone());
    }
    Ok(out)
}

pub fn mlp(g: &mut Graph, x: Var, p: &BlockParams) -> Result<Var> {
    let hidden = p.fc1.forward(g, x)?;
    let hidden = g.tape.gelu(hidden);
    Ok(p.fc2.forward(g, hidden)?)
}

/// `y = x + MSA(LN(x)); out = y + MLP(LN(y))`.
pub fn encoder_block(g: &mut Graph, x: Var, p: &BlockParams, n_heads: usize) -> Result<Var> {
    check_dim(g, x, p.dim, "encoder block")?;
    let normed = p.ln1.forward(g, x)?;
    let attended = multi_head_attention(g, normed, p, n_heads)?;
    let y = g.tape.add(x, attended)?;
    let normed = p.ln2.forward(g, y)?;
    let transformed = mlp(g, normed, p)?;
    Ok(g.tape.add(y, transformed)?)
}

/// Encoder stack, bridge adapter and decoder stack.
#[derive(Clone, Debug)]
pub struct CodecParams {
    pub config: CodecConfig,
    pub encoder: Vec<BlockParams>,
    pub bridge: Linear,
    pub decoder: Vec<BlockParams>,
}

impl CodecParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, config: &CodecConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = (0..config.enc_layers)
            .map(|i| BlockParams::init(store, &format!("encoder.{i}"), config.enc_dim, config.mlp_dim, rng))
            .collect();
        let bridge = Linear::init(store, "bridge", config.enc_dim, config.dec_dim, false, rng);
        let decoder = (0..config.dec_layers)
            .map(|i| BlockParams::init(store, &format!("decoder.{i}"), config.dec_dim, config.mlp_dim, rng))
            .collect();
        Ok(CodecParams {
            config: config.clone(),
            encoder,
            bridge,
            decoder,
        })
    }
}

/// Runs the encoder blocks in sequence.
pub fn encode(g: &mut Graph, x: Var, p: &CodecParams) -> Result<Var> {
    check_dim(g, x, p.config.enc_dim, "encoder")?;
    p.encoder
        .iter()
        .try_fold(x, |h, block| encoder_block(g, h, block, p.config.n_heads))
}

/// Linear adapter from the encoder width to the decoder width.
pub fn bridge(g: &mut Graph, x: Var, p: &CodecParams) -> Result<Var> {
    check_dim(g, x, p.config.enc_dim, "bridge")?;
    Ok(p.bridge.forward(g, x)?)
}

pub fn decode(g: &mut Graph, x: Var, p: &CodecParams) -> Result<Var> {
    check_dim(g, x, p.config.dec_dim, "decoder")?;
    p.decoder
        .iter()
        .try_fold(x, |h, block| encoder_block(g, h, block, p.config.n_heads))
}
