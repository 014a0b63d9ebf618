//! Progressive Tokens-to-Token tokenization.
//!
//! An image is unfolded into overlapping windows (a soft split), the window
//! tokens pass through a small transformer, are laid back onto their spatial
//! grid and unfolded again. Three soft splits with kernels 7/3/3 and strides
//! 4/2/2 reduce a 256×256 image to a 16×16 grid of tokens, which a final
//! bias-free linear map projects to the encoder width.

use rand::Rng;

use crate::codec::{encoder_block, BlockParams};
use crate::error::{Error, Result};
use crate::nn::{Graph, Linear, ParamStore};
use crate::tensor::kernels::output_side;
use crate::tensor::Var;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct T2TConfig {
    pub kernel_sizes: [usize; 3],
    pub strides: [usize; 3],
    pub paddings: [usize; 3],
    pub inner_dim: usize,
    pub n_inner_heads: usize,
    pub encoder_dim: usize,
    pub channels: usize,
}

impl Default for T2TConfig {
    fn default() -> Self {
        T2TConfig {
            kernel_sizes: [7, 3, 3],
            strides: [4, 2, 2],
            paddings: [2, 1, 1],
            inner_dim: 64,
            n_inner_heads: 1,
            encoder_dim: 768,
            channels: 3,
        }
    }
}

impl T2TConfig {
    /// Input side divided by this gives the token grid side.
    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_dim == 0 || self.n_inner_heads == 0 || !self.inner_dim.is_multiple_of(self.n_inner_heads) {
            return Err(Error::Config(format!(
                "token transformer dim {} must be a positive multiple of {} heads",
                self.inner_dim, self.n_inner_heads
            )));
        }
        if self.encoder_dim == 0 || self.channels == 0 {
            return Err(Error::Config("encoder_dim and channels must be positive".into()));
        }
        Ok(())
    }
}

/// Token count and per-stage grid sides for an `h×w` input.
///
/// Supported inputs are square with a side that every stage divides evenly,
/// i.e. positive multiples of the total stride (16 for the default schedule).
pub fn token_count(h: usize, w: usize, cfg: &T2TConfig) -> Result<(usize, Vec<usize>)> {
    let unsupported = |reason: String| Error::UnsupportedSize {
        height: h,
        width: w,
        reason,
    };
    if h != w {
        return Err(unsupported("input must be square".into()));
    }
    let total = cfg.total_stride();
    let valid = || format!("supported sides are positive multiples of {total} (e.g. {}, {}, {})", total * 4, total * 8, total * 16);
    let mut side = h;
    let mut sides = Vec::with_capacity(3);
    for stage in 0..3 {
        let (k, s, p) = (cfg.kernel_sizes[stage], cfg.strides[stage], cfg.paddings[stage]);
        match output_side(side, k, s, p) {
            Some(next) if next >= 1 && next * s == side => {
                side = next;
                sides.push(next);
            }
            _ => {
                return Err(unsupported(format!("stage {} cannot split side {side}; {}", stage + 1, valid())));
            }
        }
    }
    Ok((side * side, sides))
}

/// Tokens laid out on a square grid in raster order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    /// `n_tokens × dim` values on the graph's tape.
    pub tokens: Var,
    pub grid_side: usize,
}

impl TokenSequence {
    pub fn n_tokens(&self) -> usize {
        self.grid_side * self.grid_side
    }
}

/// Reshapes tokens onto their spatial grid and unfolds `k×k` neighborhoods
/// with stride `s` and zero padding `p`, so each output token concatenates
/// `k²` overlapping input tokens (channel-major).
pub fn soft_split(g: &mut Graph, tokens: TokenSequence, k: usize, s: usize, p: usize) -> Result<TokenSequence> {
    let shape = g.tape.shape(tokens.tokens).clone();
    let n = shape.dims()[0];
    if shape.ndim() != 2 || tokens.grid_side * tokens.grid_side != n {
        return Err(Error::Config(format!(
            "soft split needs a square token grid, got {shape} with grid side {}",
            tokens.grid_side
        )));
    }
    let dim = shape.dims()[1];
    let side = tokens.grid_side;
    let spatial = g.tape.transpose(tokens.tokens)?;
    let spatial = g.tape.reshape(spatial, vec![dim, side, side])?;
    unfold_image(g, spatial, k, s, p)
}

fn unfold_image(g: &mut Graph, image: Var, k: usize, s: usize, p: usize) -> Result<TokenSequence> {
    let rows = g.tape.unfold(image, k, s, p)?;
    let side = output_side(g.tape.shape(image).dims()[1], k, s, p).expect("unfold succeeded");
    Ok(TokenSequence {
        tokens: rows,
        grid_side: side,
    })
}

/// Input projection to the inner width followed by one pre-norm block.
#[derive(Clone, Debug)]
pub struct TokenTransformer {
    pub proj_in: Linear,
    pub block: BlockParams,
    pub n_heads: usize,
}

impl TokenTransformer {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        inner_dim: usize,
        n_heads: usize,
        rng: &mut R,
    ) -> Self {
        let proj_in = Linear::init(store, &format!("{name}.proj_in"), in_dim, inner_dim, false, rng);
        let block = BlockParams::init(store, &format!("{name}.block"), inner_dim, inner_dim, rng);
        TokenTransformer {
            proj_in,
            block,
            n_heads,
        }
    }
}

pub fn token_transformer(g: &mut Graph, tokens: TokenSequence, p: &TokenTransformer) -> Result<TokenSequence> {
    let in_dim = p.proj_in.in_dim(g.params());
    let shape = g.tape.shape(tokens.tokens);
    if shape.ndim() != 2 || shape.last() != in_dim {
        return Err(Error::Config(format!(
            "token transformer expects n×{in_dim} tokens, got {shape}"
        )));
    }
    let projected = p.proj_in.forward(g, tokens.tokens)?;
    let out = encoder_block(g, projected, &p.block, p.n_heads)?;
    Ok(TokenSequence {
        tokens: out,
        grid_side: tokens.grid_side,
    })
}

#[derive(Clone, Debug)]
pub struct T2TParams {
    pub config: T2TConfig,
    pub stage1: TokenTransformer,
    pub stage2: TokenTransformer,
    pub project: Linear,
}

impl T2TParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, config: &T2TConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let [k1, k2, k3] = config.kernel_sizes;
        let inner = config.inner_dim;
        let stage1 = TokenTransformer::init(store, "t2t.stage1", config.channels * k1 * k1, inner, config.n_inner_heads, rng);
        let stage2 = TokenTransformer::init(store, "t2t.stage2", inner * k2 * k2, inner, config.n_inner_heads, rng);
        let project = Linear::init(store, "t2t.project", inner * k3 * k3, config.encoder_dim, false, rng);
        Ok(T2TParams {
            config: config.clone(),
            stage1,
            stage2,
            project,
        })
    }
}

/// Full tokenization of a `C×H×W` image into `(H/16)²` tokens of
/// `encoder_dim` features.
pub fn tokens_to_token(g: &mut Graph, image: Var, p: &T2TParams) -> Result<TokenSequence> {
    let cfg = &p.config;
    let dims = g.tape.shape(image).dims().to_vec();
    if dims.len() != 3 || dims[0] != cfg.channels {
        return Err(Error::Config(format!(
            "tokenizer expects a {}×H×W image, got {dims:?}",
            cfg.channels
        )));
    }
    token_count(dims[1], dims[2], cfg)?;
    let [k1, k2, k3] = cfg.kernel_sizes;
    let [s1, s2, s3] = cfg.strides;
    let [p1, p2, p3] = cfg.paddings;

    let tokens = unfold_image(g, image, k1, s1, p1)?;
    let tokens = token_transformer(g, tokens, &p.stage1)?;
    let tokens = soft_split(g, tokens, k2, s2, p2)?;
    let tokens = token_transformer(g, tokens, &p.stage2)?;
    let tokens = soft_split(g, tokens, k3, s3, p3)?;
    let projected = p.project.forward(g, tokens.tokens)?;
    Ok(TokenSequence {
        tokens: projected,
        grid_side: tokens.grid_side,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn token_count_traces_schedule() {
        let cfg = T2TConfig::default();
        assert_eq!(token_count(256, 256, &cfg).unwrap(), (256, vec![64, 32, 16]));
        assert_eq!(token_count(64, 64, &cfg).unwrap(), (16, vec![16, 8, 4]));
        assert_eq!(token_count(128, 128, &cfg).unwrap(), (64, vec![32, 16, 8]));
        assert!(matches!(token_count(8, 8, &cfg), Err(Error::UnsupportedSize { .. })));
        assert!(matches!(token_count(64, 32, &cfg), Err(Error::UnsupportedSize { .. })));
        assert!(matches!(token_count(100, 100, &cfg), Err(Error::UnsupportedSize { .. })));
    }

    #[test]
    fn soft_split_arithmetic() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let mut g = Graph::inference(&mut tape, &store);
        let x = g.tape.constant(&Tensor::zeros(vec![64 * 64, 64]));
        let out = soft_split(&mut g, TokenSequence { tokens: x, grid_side: 64 }, 3, 2, 1).unwrap();
        assert_eq!(out.grid_side, 32);
        assert_eq!(g.tape.shape(out.tokens).dims(), &[1024, 576]);
    }

    #[test]
    fn unit_soft_split_is_identity() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let mut g = Graph::inference(&mut tape, &store);
        let data: Vec<f64> = (0..16 * 5).map(f64::from).collect();
        let x = Tensor::new(vec![16, 5], data).unwrap();
        let xv = g.tape.constant(&x);
        let out = soft_split(&mut g, TokenSequence { tokens: xv, grid_side: 4 }, 1, 1, 0).unwrap();
        assert_eq!(g.tape.value(out.tokens), &x);
    }

    #[test]
    fn soft_split_rejects_non_square_grid() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let mut g = Graph::inference(&mut tape, &store);
        let xv = g.tape.constant(&Tensor::zeros(vec![15, 2]));
        assert!(soft_split(&mut g, TokenSequence { tokens: xv, grid_side: 4 }, 3, 2, 1).is_err());
    }

    #[test]
    fn zeroed_token_transformer_passes_projection_through() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tt = TokenTransformer::init(&mut store, "tt", 6, 4, 1, &mut rng);
        for id in [tt.block.wo, tt.block.fc2.weight, tt.block.fc2.bias.unwrap()] {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let x = Tensor::uniform(vec![9, 6], 1.0, &mut rng);
        let mut tape = Tape::new();
        let mut g = Graph::inference(&mut tape, &store);
        let xv = g.tape.constant(&x);
        let out = token_transformer(&mut g, TokenSequence { tokens: xv, grid_side: 3 }, &tt).unwrap();
        let expected = crate::tensor::kernels::matmul(x.data(), store.get(tt.proj_in.weight).data(), 9, 6, 4);
        assert_eq!(g.tape.value(out.tokens).data(), &expected[..]);
    }
}
