use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{forward_patches, target_patches, ModelConfig, ModelParams};
use crate::nn::{Graph, ParamStore};
use crate::tensor::{Tape, Tensor};

use super::checkpoint::{read_records, write_records, CheckpointError, Record, Records};
use super::{adamw_step, mse_loss, AdamWState, TrainConfig};

pub const LOSS_LOG_HEADER: &str = "step,loss,grad_norm";

/// One network input with its patch-vector regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    /// `C×S×S` degraded image in `[0, 1]`.
    pub image: Tensor,
    /// `n_patches × P²·C` ground truth.
    pub target: Tensor,
}

impl TrainSample {
    /// Pairs a degraded `C×S×S` image with its `S×S` binary ground truth.
    pub fn new(image: Tensor, gt: &Tensor, config: &ModelConfig) -> Result<Self> {
        let target = target_patches(gt, config.channels(), config.patch_size)?;
        Ok(TrainSample { image, target })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Optimizer steps completed, counting this one.
    pub step: u64,
    /// Mean patch MSE over the batch, before the update.
    pub loss: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

impl StepReport {
    /// Loss log line; wall time is left out so seeded runs log identically.
    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.step, self.loss, self.grad_norm)
    }
}

/// Forward, MSE, backward and one AdamW update over `batch`. Gradients are
/// averaged over the batch items.
pub fn train_step(params: &mut ModelParams, state: &mut AdamWState, cfg: &TrainConfig, batch: &[&TrainSample]) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("training batch".into()));
    }
    let started = Instant::now();
    let scale = 1.0 / batch.len() as f64;
    let mut grads: Vec<Tensor> = params.store.tensors().iter().map(|t| Tensor::zeros(t.dims().to_vec())).collect();
    let mut total = 0.0;
    for sample in batch {
        let mut tape = Tape::new();
        let mut g = Graph::trainable(&mut tape, &params.store);
        let x = g.tape.constant(&sample.image);
        let pred = forward_patches(&mut g, x, params)?;
        let target = g.tape.constant(&sample.target);
        let loss = mse_loss(g.tape, pred, target)?;
        total += g.tape.value(loss).item();
        g.tape.backward(loss)?;
        for (acc, grad) in grads.iter_mut().zip(g.param_grads()) {
            for (a, d) in acc.data_mut().iter_mut().zip(grad.data()) {
                *a += scale * d;
            }
        }
    }
    let grad_norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    adamw_step(&mut params.store, &grads, state, cfg)?;
    Ok(StepReport {
        step: state.t,
        loss: total * scale,
        grad_norm,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Owns the parameters, the optimizer state and the seeded batch order.
///
/// An epoch is one pass over every sample in a fresh shuffled order; the
/// final batch of an epoch may be short.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ModelParams,
    pub state: AdamWState,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl Trainer {
    /// Fresh parameters initialized from `config.seed`.
    pub fn new(model: &ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(model, config.seed)?;
        let state = AdamWState::new(&params.store);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Trainer {
            params,
            state,
            config,
            rng,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
        })
    }

    pub fn step(&self) -> u64 {
        self.state.t
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn steps_per_epoch(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.config.batch_size)
    }

    fn next_batch(&mut self, n_samples: usize) -> Vec<usize> {
        if self.order.len() != n_samples {
            self.order.clear();
            self.cursor = 0;
        }
        if self.cursor >= self.order.len() {
            self.order = (0..n_samples).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + self.config.batch_size).min(n_samples);
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    pub fn train_step(&mut self, data: &[TrainSample]) -> Result<StepReport> {
        if data.is_empty() {
            return Err(Error::EmptyDataset("training set".into()));
        }
        let batch: Vec<&TrainSample> = self.next_batch(data.len()).into_iter().map(|i| &data[i]).collect();
        train_step(&mut self.params, &mut self.state, &self.config, &batch)
    }

    fn records(&self) -> Vec<Record> {
        let store = &self.params.store;
        let mut out = vec![
            Record::text("config.model", self.params.config.to_kv()),
            Record::text("config.train", self.config.to_kv()),
        ];
        for (name, t) in store.iter() {
            out.push(Record::f64(format!("param/{name}"), t.dims().to_vec(), t.data().to_vec()));
        }
        for (prefix, moments) in [("adam.m", &self.state.m), ("adam.v", &self.state.v)] {
            for ((name, t), buf) in store.iter().zip(moments) {
                out.push(Record::f64(format!("{prefix}/{name}"), t.dims().to_vec(), buf.clone()));
            }
        }
        let seed = self.rng.get_seed();
        let mut rng_words: Vec<u64> = seed
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let word_pos = self.rng.get_word_pos();
        rng_words.extend([self.rng.get_stream(), word_pos as u64, (word_pos >> 64) as u64]);
        out.extend([
            Record::u64("adam.t", vec![self.state.t]),
            Record::u64("rng", rng_words),
            Record::u64("data.order", self.order.iter().map(|&i| i as u64).collect()),
            Record::u64("data.cursor", vec![self.cursor as u64]),
            Record::u64("data.epoch", vec![self.epoch]),
        ]);
        out
    }

    /// Writes the full training state; equal states produce equal bytes.
    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(write_records(path, &self.records())?)
    }

    /// Restores a saved state. With `expected`, parameter shapes are checked
    /// against that configuration instead of the stored one.
    pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<Self> {
        let records = Records::new(read_records(path)?);
        let params = params_from_records(&records, expected)?;
        let config = TrainConfig::from_kv(records.text("config.train")?)?;

        let moments = |prefix: &str| -> Result<Vec<Vec<f64>>> {
            params
                .store
                .iter()
                .map(|(name, t)| Ok(records.f64s(&format!("{prefix}/{name}"), t.dims())?.to_vec()))
                .collect()
        };
        let state = AdamWState {
            m: moments("adam.m")?,
            v: moments("adam.v")?,
            t: single(&records, "adam.t")?,
        };

        let words = records.u64s("rng")?;
        if words.len() != 7 {
            return Err(CheckpointError::Malformed("rng record must hold 7 words".into()).into());
        }
        let mut seed = [0u8; 32];
        for (dst, w) in seed.chunks_exact_mut(8).zip(&words[..4]) {
            dst.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(words[4]);
        rng.set_word_pos(u128::from(words[5]) | (u128::from(words[6]) << 64));

        let order: Vec<usize> = records.u64s("data.order")?.iter().map(|&i| i as usize).collect();
        let cursor = single(&records, "data.cursor")? as usize;
        if cursor > order.len() {
            return Err(CheckpointError::Malformed("data cursor past the end of the order".into()).into());
        }
        Ok(Trainer {
            params,
            state,
            config,
            rng,
            order,
            cursor,
            epoch: single(&records, "data.epoch")?,
        })
    }
}

fn single(records: &Records, name: &str) -> Result<u64> {
    match records.u64s(name)? {
        [v] => Ok(*v),
        _ => Err(CheckpointError::Malformed(format!("record `{name}` must hold one value")).into()),
    }
}

fn params_from_records(records: &Records, expected: Option<&ModelConfig>) -> Result<ModelParams> {
    let stored = ModelConfig::from_kv(records.text("config.model")?)?;
    let config = expected.unwrap_or(&stored);
    let mut params = ModelParams::init(config, 0)?;
    let store: &mut ParamStore = &mut params.store;
    for id in store.ids().collect::<Vec<_>>() {
        let name = format!("param/{}", store.name(id));
        let data = records.f64s(&name, store.get(id).dims())?.to_vec();
        store.get_mut(id).data_mut().copy_from_slice(&data);
    }
    if *config != stored {
        return Err(Error::Config(
            "checkpoint was written for a different model configuration".into(),
        ));
    }
    Ok(params)
}

/// Parameters only, for inference.
pub fn load_params(path: &Path, expected: Option<&ModelConfig>) -> Result<ModelParams> {
    params_from_records(&Records::new(read_records(path)?), expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> ModelConfig {
        ModelConfig::toy().with_image_size(64)
    }

    fn samples(cfg: &ModelConfig, n: usize) -> Vec<TrainSample> {
        (0..n)
            .map(|i| {
                let side = cfg.image_size;
                let gt = Tensor::new(
                    vec![side, side],
                    (0..side * side).map(|p| f64::from(!(p / side + p % side + i).is_multiple_of(5) as u8)).collect(),
                )
                .unwrap();
                let mut img = Vec::new();
                for _ in 0..3 {
                    img.extend(gt.data().iter().map(|v| 0.2 + 0.6 * v));
                }
                TrainSample::new(Tensor::new(vec![3, side, side], img).unwrap(), &gt, cfg).unwrap()
            })
            .collect()
    }

    fn train_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            lr: 1e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let mut t = Trainer::new(&tiny_model(), TrainConfig { batch_size: 2, ..train_cfg() }).unwrap();
        let mut seen: Vec<usize> = (0..3).flat_map(|_| t.next_batch(5)).collect();
        assert_eq!(t.epoch(), 1);
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert_eq!(t.next_batch(5).len(), 2);
        assert_eq!(t.epoch(), 2);
    }

    #[test]
    fn same_seed_same_losses() {
        let cfg = tiny_model();
        let data = samples(&cfg, 3);
        let run = || {
            let mut t = Trainer::new(&cfg, train_cfg()).unwrap();
            (0..3).map(|_| t.train_step(&data).unwrap().loss).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted_run() {
        let cfg = tiny_model();
        let data = samples(&cfg, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.ckpt");

        let mut straight = Trainer::new(&cfg, train_cfg()).unwrap();
        for _ in 0..2 {
            straight.train_step(&data).unwrap();
        }
        straight.save(&path).unwrap();
        let expected: Vec<f64> = (0..5).map(|_| straight.train_step(&data).unwrap().loss).collect();

        let mut resumed = Trainer::load(&path, None).unwrap();
        assert_eq!(resumed.step(), 2);
        let again: Vec<f64> = (0..5).map(|_| resumed.train_step(&data).unwrap().loss).collect();
        assert_eq!(expected, again);
        assert_eq!(resumed.params.store, straight.params.store);

        let bytes = std::fs::read(&path).unwrap();
        Trainer::load(&path, None).unwrap().save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn load_checks_shapes_against_current_config() {
        let cfg = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        Trainer::new(&cfg, train_cfg()).unwrap().save(&path).unwrap();
        let mut other = cfg.clone();
        other.codec.mlp_dim = 48;
        let err = Trainer::load(&path, Some(&other)).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(CheckpointError::ShapeMismatch { .. })), "{err}");
        assert!(load_params(&path, Some(&cfg)).is_ok());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let cfg = tiny_model();
        let mut t = Trainer::new(&cfg, train_cfg()).unwrap();
        assert!(matches!(t.train_step(&[]), Err(Error::EmptyDataset(_))));
    }
}
