//! Parameter storage and the small layer helpers shared by the tokenizer,
//! the transformer stacks and the pixel head.

use rand::Rng;

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named learnable arrays in a fixed registration order.
///
/// The order is the canonical order used by the optimizer state and by
/// checkpoint records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }
}

/// A tape plus lazy bindings from parameters to tape leaves.
///
/// Each parameter is registered at most once per graph, so every use of it
/// accumulates into one gradient.
pub struct Graph<'a> {
    pub tape: &'a mut Tape,
    params: &'a ParamStore,
    bound: Vec<Option<Var>>,
    trainable: bool,
}

impl<'a> Graph<'a> {
    /// Graph whose parameters receive gradients.
    pub fn trainable(tape: &'a mut Tape, params: &'a ParamStore) -> Self {
        Self::with_mode(tape, params, true)
    }

    /// Graph for inference; parameters are recorded as constants.
    pub fn inference(tape: &'a mut Tape, params: &'a ParamStore) -> Self {
        Self::with_mode(tape, params, false)
    }

    fn with_mode(tape: &'a mut Tape, params: &'a ParamStore, trainable: bool) -> Self {
        Graph {
            tape,
            params,
            bound: vec![None; params.len()],
            trainable,
        }
    }

    pub fn params(&self) -> &'a ParamStore {
        self.params
    }

    /// Substitutes an existing tape value for a parameter, e.g. a perturbed
    /// copy during finite-difference checks.
    pub fn bind(&mut self, id: ParamId, var: Var) {
        self.bound[id.0] = Some(var);
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let value = self.params.get(id);
        let v = if self.trainable {
            self.tape.param(value)
        } else {
            self.tape.constant(value)
        };
        self.bound[id.0] = Some(v);
        v
    }

    /// Gradients for every parameter in store order, zeros for parameters
    /// the forward pass never touched.
    pub fn param_grads(&self) -> Vec<Tensor> {
        self.params
            .ids()
            .map(|id| match self.bound[id.0] {
                Some(v) => self.tape.grad(v),
                None => Tensor::zeros(self.params.get(id).dims().to_vec()),
            })
            .collect()
    }
}

/// Dense layer `y = x·W (+ b)` with `W` stored as `in×out`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    /// Registers a layer initialized uniformly in `±1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::uniform(vec![fan_in, fan_out], bound, rng),
        );
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::uniform(vec![fan_out], bound, rng)));
        Linear { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, TensorError> {
        let w = g.param(self.weight);
        let y = g.tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.tape.add(y, b)
            }
            None => Ok(y),
        }
    }

    pub fn in_dim(&self, store: &ParamStore) -> usize {
        store.get(self.weight).dims()[0]
    }

    pub fn out_dim(&self, store: &ParamStore) -> usize {
        store.get(self.weight).dims()[1]
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn init(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(vec![dim])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(vec![dim])),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, TensorError> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.tape.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
    }
}
