//! Briefly trains a small model on 64-pixel tiles, then binarizes a page of
//! arbitrary size by tiling, and scores it next to Otsu.
//!
//! `cargo run --release --example binarize_page -- [steps]`

use t2t_binformer::data::synth::{synthetic_pair_with, SynthSpec};
use t2t_binformer::data::tile;
use t2t_binformer::eval::{binarize_page, evaluate_pair, Baseline, MetricsReport};
use t2t_binformer::model::ModelConfig;
use t2t_binformer::train::{TrainConfig, TrainSample, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let model = ModelConfig::toy().with_image_size(64);

    let spec = SynthSpec { height: 150, width: 230, ..SynthSpec::square(150) };
    let mut data = Vec::new();
    for seed in 0..4 {
        for t in tile(&synthetic_pair_with(&spec, seed), model.image_size)?.tiles {
            data.push(TrainSample::new(t.degraded, &t.gt, &model)?);
        }
    }
    let mut trainer = Trainer::new(&model, TrainConfig { lr: 3e-3, batch_size: 4, ..TrainConfig::default() })?;
    for _ in 0..steps {
        let r = trainer.train_step(&data)?;
        if r.step % 50 == 0 {
            println!("step {:>4}  mse {:.5}", r.step, r.loss);
        }
    }

    let page = synthetic_pair_with(&spec, 99);
    let out = binarize_page(&trainer.params, &page.degraded)?;
    println!("binarized {}x{} page, output {:?}", page.height(), page.width(), out.binary.dims());
    println!("method,{}", MetricsReport::CSV_HEADER);
    println!("model,{}", evaluate_pair(&out.binary, &page.gt)?.csv_row());
    println!("otsu,{}", evaluate_pair(&Baseline::Otsu.apply(&page.degraded)?, &page.gt)?.csv_row());
    Ok(())
}
