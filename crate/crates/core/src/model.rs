//! The end-to-end binarization network: tokenize, add positional
//! embeddings, encode, bridge, decode, project each token to a pixel patch,
//! reassemble the patches and threshold.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{bridge, decode, encode, CodecConfig, CodecParams};
use crate::error::{Error, Result};
use crate::nn::{Graph, Linear, ParamId, ParamStore};
use crate::t2t::{token_count, tokens_to_token, T2TConfig, T2TParams, TokenSequence};
use crate::tensor::{Tape, Tensor, Var};

/// Grayscale level at or above which an output pixel is background.
pub const BINARY_THRESHOLD: f64 = 0.5;

/// Range of the zero-mean uniform positional-embedding initialization.
pub const POS_EMBED_INIT: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub t2t: T2TConfig,
    pub codec: CodecConfig,
}

impl ModelConfig {
    /// Encoder 12×768/8 heads, decoder 1×64, 256-pixel inputs, 16-pixel patches.
    pub fn paper() -> Self {
        ModelConfig {
            image_size: 256,
            patch_size: 16,
            t2t: T2TConfig::default(),
            codec: CodecConfig::paper(),
        }
    }

    /// Desk-scale variant: 2 encoder layers of width 32 with 2 heads, a
    /// width-32 decoder and a width-16 tokenizer.
    pub fn toy() -> Self {
        ModelConfig {
            image_size: 256,
            patch_size: 16,
            t2t: T2TConfig {
                inner_dim: 16,
                encoder_dim: 32,
                ..T2TConfig::default()
            },
            codec: CodecConfig {
                enc_layers: 2,
                dec_layers: 1,
                n_heads: 2,
                enc_dim: 32,
                dec_dim: 32,
                mlp_dim: 64,
            },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected paper or toy)"))),
        }
    }

    pub fn with_image_size(mut self, size: usize) -> Self {
        self.image_size = size;
        self
    }

    pub fn channels(&self) -> usize {
        self.t2t.channels
    }

    pub fn n_patches(&self) -> Result<usize> {
        Ok(token_count(self.image_size, self.image_size, &self.t2t)?.0)
    }

    /// Values per predicted patch: `P²·C`.
    pub fn patch_values(&self) -> usize {
        self.patch_size * self.patch_size * self.channels()
    }

    pub fn validate(&self) -> Result<()> {
        self.t2t.validate()?;
        self.codec.validate()?;
        if self.t2t.encoder_dim != self.codec.enc_dim {
            return Err(Error::Config(format!(
                "tokenizer output width {} differs from encoder width {}",
                self.t2t.encoder_dim, self.codec.enc_dim
            )));
        }
        let (_, sides) = token_count(self.image_size, self.image_size, &self.t2t)?;
        let grid = *sides.last().expect("three stages");
        if grid * self.patch_size != self.image_size {
            return Err(Error::Config(format!(
                "patch size {} does not tile a {} image on a {grid}×{grid} token grid",
                self.patch_size, self.image_size
            )));
        }
        Ok(())
    }

    /// Flat `key = value` listing, stable across runs.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |a: [usize; 3]| a.map(|v| v.to_string()).join(",");
        vec![
            ("image_size", self.image_size.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("channels", self.t2t.channels.to_string()),
            ("t2t_kernels", list(self.t2t.kernel_sizes)),
            ("t2t_strides", list(self.t2t.strides)),
            ("t2t_paddings", list(self.t2t.paddings)),
            ("t2t_inner_dim", self.t2t.inner_dim.to_string()),
            ("t2t_inner_heads", self.t2t.n_inner_heads.to_string()),
            ("enc_layers", self.codec.enc_layers.to_string()),
            ("dec_layers", self.codec.dec_layers.to_string()),
            ("n_heads", self.codec.n_heads.to_string()),
            ("enc_dim", self.codec.enc_dim.to_string()),
            ("dec_dim", self.codec.dec_dim.to_string()),
            ("mlp_dim", self.codec.mlp_dim.to_string()),
        ]
    }

    /// Parses the output of [`to_kv`](Self::to_kv). Every key is required
    /// and unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed config line `{line}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str| {
            map.remove(key)
                .ok_or_else(|| Error::Config(format!("model config is missing `{key}`")))
        };
        let num = |s: String| -> Result<usize> {
            s.parse().map_err(|_| Error::Config(format!("`{s}` is not a positive integer")))
        };
        let triple = |s: String| -> Result<[usize; 3]> {
            let parts: Vec<usize> = s.split(',').map(|p| num(p.trim().to_string())).collect::<Result<_>>()?;
            parts
                .try_into()
                .map_err(|_| Error::Config(format!("`{s}` must list three values")))
        };
        let config = ModelConfig {
            image_size: num(take("image_size")?)?,
            patch_size: num(take("patch_size")?)?,
            t2t: T2TConfig {
                channels: num(take("channels")?)?,
                kernel_sizes: triple(take("t2t_kernels")?)?,
                strides: triple(take("t2t_strides")?)?,
                paddings: triple(take("t2t_paddings")?)?,
                inner_dim: num(take("t2t_inner_dim")?)?,
                n_inner_heads: num(take("t2t_inner_heads")?)?,
                encoder_dim: 0,
            },
            codec: CodecConfig {
                enc_layers: num(take("enc_layers")?)?,
                dec_layers: num(take("dec_layers")?)?,
                n_heads: num(take("n_heads")?)?,
                enc_dim: num(take("enc_dim")?)?,
                dec_dim: num(take("dec_dim")?)?,
                mlp_dim: num(take("mlp_dim")?)?,
            },
        };
        if let Some(key) = map.keys().next() {
            return Err(Error::Config(format!("unknown model config key `{key}`")));
        }
        let mut config = config;
        config.t2t.encoder_dim = config.codec.enc_dim;
        config.validate()?;
        Ok(config)
    }
}

/// All learnable arrays of the network plus the handles that locate them.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub t2t: T2TParams,
    pub pos_embed: ParamId,
    pub codec: CodecParams,
    pub pixel_head: Linear,
}

impl ModelParams {
    /// Deterministic initialization from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let t2t = T2TParams::init(&mut store, &config.t2t, &mut rng)?;
        let n_patches = config.n_patches()?;
        let pos_embed = store.add(
            "pos_embed",
            Tensor::uniform(vec![n_patches, config.codec.enc_dim], POS_EMBED_INIT, &mut rng),
        );
        let codec = CodecParams::init(&mut store, &config.codec, &mut rng)?;
        let pixel_head = Linear::init(&mut store, "pixel_head", config.codec.dec_dim, config.patch_values(), true, &mut rng);
        Ok(ModelParams {
            config: config.clone(),
            store,
            t2t,
            pos_embed,
            codec,
            pixel_head,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.numel()
    }
}

/// Adds the learned positional embedding to every token.
pub fn add_positional(g: &mut Graph, x: TokenSequence, pe: Var) -> Result<TokenSequence> {
    let (xs, ps) = (g.tape.shape(x.tokens), g.tape.shape(pe));
    if xs != ps {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "add_positional",
            left: xs.clone(),
            right: ps.clone(),
        }
        .into());
    }
    let tokens = g.tape.add(x.tokens, pe)?;
    Ok(TokenSequence { tokens, grid_side: x.grid_side })
}

/// Linear projection of each decoded token to a flattened `P·P·C` patch.
pub fn pixel_head(g: &mut Graph, tokens: Var, head: &Linear) -> Result<Var> {
    let expected = head.in_dim(g.params());
    let shape = g.tape.shape(tokens);
    if shape.ndim() != 2 || shape.last() != expected {
        return Err(Error::Config(format!("pixel head expects n×{expected} tokens, got {shape}")));
    }
    Ok(head.forward(g, tokens)?)
}

/// Records the full network on `g` and returns the raw (unclamped)
/// `n_patches × P²·C` patch predictions.
pub fn forward_patches(g: &mut Graph, image: Var, params: &ModelParams) -> Result<Var> {
    let dims = g.tape.shape(image).dims().to_vec();
    let cfg = &params.config;
    if dims != [cfg.channels(), cfg.image_size, cfg.image_size] {
        let (h, w) = (dims.get(1).copied().unwrap_or(0), dims.get(2).copied().unwrap_or(0));
        return Err(Error::UnsupportedSize {
            height: h,
            width: w,
            reason: format!(
                "model expects {}×{}×{} inputs",
                cfg.channels(),
                cfg.image_size,
                cfg.image_size
            ),
        });
    }
    let tokens = tokens_to_token(g, image, &params.t2t)?;
    let pe = g.param(params.pos_embed);
    let tokens = add_positional(g, tokens, pe)?;
    let encoded = encode(g, tokens.tokens, &params.codec)?;
    let narrowed = bridge(g, encoded, &params.codec)?;
    let decoded = decode(g, narrowed, &params.codec)?;
    pixel_head(g, decoded, &params.pixel_head)
}

/// Continuous and thresholded network output for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizationOutput {
    /// `C×H×W`, clamped to `[0, 1]`.
    pub continuous: Tensor,
    /// `H×W` of `{0, 1}`; 0 is text.
    pub binary: Tensor,
}

/// Inference on a `C×S×S` image with values in `[0, 1]`.
pub fn forward(image: &Tensor, params: &ModelParams) -> Result<BinarizationOutput> {
    let mut tape = Tape::new();
    let mut g = Graph::inference(&mut tape, &params.store);
    let x = g.tape.constant(image);
    let patches = forward_patches(&mut g, x, params)?;
    let cfg = &params.config;
    let raw = reassemble(g.tape.value(patches), cfg.channels(), cfg.image_size, cfg.image_size, cfg.patch_size)?;
    let continuous = raw.map(|v| v.clamp(0.0, 1.0));
    let binary = binarize(&continuous);
    Ok(BinarizationOutput { continuous, binary })
}

/// Channel mean thresholded at [`BINARY_THRESHOLD`]: 1 (background) at or
/// above, 0 (text) below.
pub fn binarize(continuous: &Tensor) -> Tensor {
    let gray = channel_mean(continuous);
    gray.map(|v| if v >= BINARY_THRESHOLD { 1.0 } else { 0.0 })
}

/// Mean over the leading channel axis of a `C×H×W` array.
pub fn channel_mean(image: &Tensor) -> Tensor {
    let d = image.dims();
    let (c, plane) = (d[0], d[1] * d[2]);
    let mut out = vec![0.0; plane];
    for ch in 0..c {
        for (o, v) in out.iter_mut().zip(&image.data()[ch * plane..(ch + 1) * plane]) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= c as f64;
    }
    Tensor::new(vec![d[1], d[2]], out).expect("plane shape")
}

fn check_patch_grid(c: usize, h: usize, w: usize, patch: usize) -> Result<()> {
    if patch == 0 || !h.is_multiple_of(patch) || !w.is_multiple_of(patch) || c == 0 {
        return Err(Error::UnsupportedSize {
            height: h,
            width: w,
            reason: format!("sides must be multiples of the patch size {patch}"),
        });
    }
    Ok(())
}

/// Non-overlapping `P×P` patches in raster order, each flattened
/// pixel-major with channels innermost: `n × (P·P·C)`.
pub fn split_patches(image: &Tensor, patch: usize) -> Result<Tensor> {
    let d = image.dims();
    if d.len() != 3 {
        return Err(Error::Config(format!("expected C×H×W, got {}", image.shape())));
    }
    let (c, h, w) = (d[0], d[1], d[2]);
    check_patch_grid(c, h, w, patch)?;
    let (gh, gw) = (h / patch, w / patch);
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..patch {
                for x in 0..patch {
                    for ch in 0..c {
                        out.push(src[(ch * h + py * patch + y) * w + px * patch + x]);
                    }
                }
            }
        }
    }
    Ok(Tensor::new(vec![gh * gw, patch * patch * c], out)?)
}

/// Inverse of [`split_patches`].
pub fn reassemble(patches: &Tensor, c: usize, h: usize, w: usize, patch: usize) -> Result<Tensor> {
    check_patch_grid(c, h, w, patch)?;
    let (gh, gw) = (h / patch, w / patch);
    let expected = [gh * gw, patch * patch * c];
    if patches.dims() != expected {
        return Err(Error::UnsupportedSize {
            height: h,
            width: w,
            reason: format!("expected {}×{} patches, got {}", expected[0], expected[1], patches.shape()),
        });
    }
    let src = patches.data();
    let mut out = vec![0.0; c * h * w];
    let mut i = 0;
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..patch {
                for x in 0..patch {
                    for ch in 0..c {
                        out[(ch * h + py * patch + y) * w + px * patch + x] = src[i];
                        i += 1;
                    }
                }
            }
        }
    }
    Ok(Tensor::new(vec![c, h, w], out)?)
}

/// `H×W` ground truth replicated over `channels` and split into patch
/// vectors, the regression target of the patch predictions.
pub fn target_patches(gt: &Tensor, channels: usize, patch: usize) -> Result<Tensor> {
    let d = gt.dims();
    if d.len() != 2 {
        return Err(Error::Config(format!("ground truth must be H×W, got {}", gt.shape())));
    }
    let mut data = Vec::with_capacity(gt.numel() * channels);
    for _ in 0..channels {
        data.extend_from_slice(gt.data());
    }
    split_patches(&Tensor::new(vec![channels, d[0], d[1]], data)?, patch)
}
