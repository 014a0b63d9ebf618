//! Patch-regression objective, AdamW, the training loop and checkpoints.

mod checkpoint;
mod optim;
mod trainer;

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use checkpoint::{decode_records, encode_records, read_records, write_records, CheckpointError, Payload, Record, Records, FORMAT_VERSION, MAGIC};
pub use optim::{adamw_step, AdamWState};
pub use trainer::{load_params, train_step, StepReport, TrainSample, Trainer, LOSS_LOG_HEADER};

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorError, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1.5e-4,
            eps: 1e-8,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 16,
            epochs: 200,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("lr ({}) and eps ({}) must be positive", self.lr, self.eps));
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return bad(format!("weight_decay {} must lie in [0, 1)", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} {b} must lie in (0, 1)"));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in [
            ("lr", self.lr.to_string()),
            ("eps", self.eps.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed config line `{line}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn parse<T: std::str::FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = map
                .remove(key)
                .ok_or_else(|| Error::Config(format!("training config is missing `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`")))
        }
        let cfg = TrainConfig {
            lr: parse(&mut map, "lr")?,
            eps: parse(&mut map, "eps")?,
            weight_decay: parse(&mut map, "weight_decay")?,
            beta1: parse(&mut map, "beta1")?,
            beta2: parse(&mut map, "beta2")?,
            batch_size: parse(&mut map, "batch_size")?,
            epochs: parse(&mut map, "epochs")?,
            seed: parse(&mut map, "seed")?,
        };
        if let Some(key) = map.keys().next() {
            return Err(Error::Config(format!("unknown training config key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mean of squared differences over every element.
pub fn mse_loss(tape: &mut Tape, pred: Var, gt: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(gt) {
        return Err(TensorError::ShapeMismatch {
            op: "mse_loss",
            left: tape.shape(pred).clone(),
            right: tape.shape(gt).clone(),
        }
        .into());
    }
    let diff = tape.sub(pred, gt)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean_all(sq))
}
