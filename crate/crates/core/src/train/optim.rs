use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

use super::TrainConfig;

/// First and second moment estimates for every parameter, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Completed update count; the next update uses bias correction `t + 1`.
    pub t: u64,
}

impl AdamWState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        AdamWState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One AdamW update: decoupled decay `θ ← θ(1 − lr·wd)`, then the
/// bias-corrected Adam step `θ ← θ − lr·m̂/(√v̂ + eps)`.
///
/// Gradients are screened first; a non-finite value aborts the step
/// without touching any parameter.
pub fn adamw_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdamWState, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Config(format!(
            "optimizer expects {} gradients and moment buffers, got {} and {}",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (id, g) in store.ids().zip(grads) {
        if g.shape() != store.get(id).shape() {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "adamw_step",
                left: store.get(id).shape().clone(),
                right: g.shape().clone(),
            }
            .into());
        }
        if let Some((index, &value)) = g.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                name: store.name(id).to_string(),
                index,
                value,
            });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (((param, g), m), v) in store
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((theta, &g), m), v) in param.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *theta *= decay;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
