//! Traces the tokens-to-token schedule: stage grid sides and the final
//! token matrix for a few input sizes.
//!
//! `cargo run --example tokenize`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use t2t_binformer::nn::{Graph, ParamStore};
use t2t_binformer::t2t::{token_count, tokens_to_token, T2TConfig, T2TParams};
use t2t_binformer::tensor::{Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = T2TConfig::default();
    let mut store = ParamStore::new();
    let params = T2TParams::init(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("kernels {:?}, strides {:?}, paddings {:?}", cfg.kernel_sizes, cfg.strides, cfg.paddings);
    for side in [64, 128, 256] {
        let (n, sides) = token_count(side, side, &cfg)?;
        let mut tape = Tape::new();
        let mut g = Graph::inference(&mut tape, &store);
        let image = g.tape.constant(&Tensor::full(vec![3, side, side], 0.5));
        let seq = tokens_to_token(&mut g, image, &params)?;
        println!(
            "{side}x{side}: grid sides {sides:?} -> {n} tokens, token matrix {}",
            g.tape.shape(seq.tokens)
        );
    }
    for side in [100, 8] {
        if let Err(e) = token_count(side, side, &cfg) {
            println!("{side}x{side}: {e}");
        }
    }
    Ok(())
}
