//! Interrupts a training run, saves a checkpoint, resumes from it and shows
//! that the resumed loss trace equals the uninterrupted one.
//!
//! `cargo run --example checkpoint_resume`

use t2t_binformer::data::synth::synthetic_pair;
use t2t_binformer::model::ModelConfig;
use t2t_binformer::train::{TrainConfig, TrainSample, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = ModelConfig::toy().with_image_size(64);
    let data = (0..6)
        .map(|seed| {
            let p = synthetic_pair(64, seed);
            TrainSample::new(p.degraded, &p.gt, &model)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = TrainConfig { batch_size: 4, lr: 1e-3, ..TrainConfig::default() };

    let mut straight = Trainer::new(&model, cfg.clone())?;
    let full: Vec<f64> = (0..8).map(|_| straight.train_step(&data).map(|r| r.loss)).collect::<Result<_, _>>()?;

    let dir = std::env::temp_dir().join(format!("binformer-resume-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("step3.ckpt");
    let mut first = Trainer::new(&model, cfg)?;
    let mut resumed: Vec<f64> = (0..3).map(|_| first.train_step(&data).map(|r| r.loss)).collect::<Result<_, _>>()?;
    first.save(&path)?;
    println!("saved {} bytes at step {}", std::fs::metadata(&path)?.len(), first.step());

    let mut second = Trainer::load(&path, Some(&model))?;
    for _ in 0..5 {
        resumed.push(second.train_step(&data)?.loss);
    }
    for (i, (a, b)) in full.iter().zip(&resumed).enumerate() {
        println!("step {}  uninterrupted {a:.12}  resumed {b:.12}  {}", i + 1, if a == b { "same" } else { "DIFFERENT" });
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
