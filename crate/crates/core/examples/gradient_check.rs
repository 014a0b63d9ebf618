//! Finite-difference checks of tape gradients, from single ops up to a
//! full encoder block.
//!
//! `cargo run --example gradient_check`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use t2t_binformer::codec::{encoder_block, BlockParams};
use t2t_binformer::nn::{Graph, ParamStore};
use t2t_binformer::tensor::{grad_check, Tape, Tensor, TensorError, Var};

fn loss(t: &mut Tape, y: Var) -> Result<Var, TensorError> {
    let w = Tensor::uniform(t.shape(y).dims().to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(9));
    let w = t.constant(&w);
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::uniform(vec![6, 8], 1.0, &mut rng);
    let key = Tensor::uniform(vec![6, 8], 1.0, &mut rng);

    let report = grad_check(|t: &mut Tape, x| {
        let y = t.softmax(x, 1)?;
        loss(t, y)
    }, &x, 1e-5, 1e-6)?;
    println!("softmax          max rel err {:.2e}  passed {}", report.max_rel_error, report.passed);

    let report = grad_check(|t: &mut Tape, q| {
        let k = t.constant(&key);
        let y = t.attention(q, k, k)?;
        loss(t, y)
    }, &x, 1e-5, 1e-6)?;
    println!("fused attention  max rel err {:.2e}  passed {}", report.max_rel_error, report.passed);

    let report = grad_check(|t: &mut Tape, x| {
        let y = t.unfold(x, 3, 2, 1)?;
        loss(t, y)
    }, &Tensor::uniform(vec![2, 7, 7], 1.0, &mut rng), 1e-5, 1e-6)?;
    println!("unfold           max rel err {:.2e}  passed {}", report.max_rel_error, report.passed);

    let mut store = ParamStore::new();
    let block = BlockParams::init(&mut store, "block", 8, 16, &mut rng);
    let report = grad_check(|t: &mut Tape, x| -> Result<Var, t2t_binformer::error::Error> {
        let mut g = Graph::inference(t, &store);
        let y = encoder_block(&mut g, x, &block, 2)?;
        Ok(loss(g.tape, y)?)
    }, &x, 1e-5, 1e-4)?;
    println!(
        "encoder block    max rel err {:.2e}  passed {} ({} coordinates)",
        report.max_rel_error, report.passed, report.checked
    );
    Ok(())
}
