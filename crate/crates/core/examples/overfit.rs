//! Overfits the toy model to one synthetic 256×256 page and reports the
//! training MSE and the PSNR of the forward pass against the ground truth.
//!
//! `cargo run --release --example overfit -- [lr] [max_steps] [out_dir]`
//!
//! Defaults: lr 3e-3, 3000 steps. With `out_dir`, the degraded input, the
//! ground truth and both outputs are written there as PNG.

use std::path::PathBuf;
use std::time::Instant;

use t2t_binformer::data::synth::synthetic_pair;
use t2t_binformer::data::{save_binary, save_continuous};
use t2t_binformer::eval::{psnr, psnr_continuous};
use t2t_binformer::model::{forward, ModelConfig};
use t2t_binformer::train::{TrainConfig, TrainSample, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3e-3);
    let max_steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let out_dir = args.next().map(PathBuf::from);

    let model = ModelConfig::toy();
    let pair = synthetic_pair(256, 7);
    let data = [TrainSample::new(pair.degraded.clone(), &pair.gt, &model)?];
    let mut trainer = Trainer::new(&model, TrainConfig { lr, batch_size: 1, ..TrainConfig::default() })?;
    println!("toy model, {} parameters, lr {lr:e}", trainer.params.num_parameters());

    let started = Instant::now();
    while trainer.step() < max_steps {
        let r = trainer.train_step(&data)?;
        if r.step % 50 == 0 || r.step == 1 || r.loss <= 1e-3 {
            println!(
                "step {:>5}  mse {:.5}  grad norm {:.3}  {:.0}s",
                r.step,
                r.loss,
                r.grad_norm,
                started.elapsed().as_secs_f64()
            );
        }
        if r.loss <= 1e-3 {
            break;
        }
    }

    let out = forward(&pair.degraded, &trainer.params)?;
    println!(
        "after {} steps: continuous PSNR {:.2} dB, binary PSNR {:.2} dB",
        trainer.step(),
        psnr_continuous(&out.continuous, &pair.gt)?,
        psnr(&out.binary, &pair.gt)?
    );
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        save_continuous(&dir.join("degraded.png"), &pair.degraded)?;
        save_binary(&dir.join("gt.png"), &pair.gt)?;
        save_continuous(&dir.join("continuous.png"), &out.continuous)?;
        save_binary(&dir.join("binary.png"), &out.binary)?;
        println!("images written to {}", dir.display());
    }
    Ok(())
}
