//! Parameter-backed layers shared by the text projection and the backbone.

use rand::Rng;

use crate::numeric::{Graph, ParamSet, Tensor, TensorError, Var};

/// `x · W (+ b)` with `W: d_in × d_out` stored in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: Option<usize>,
    pub d_in: usize,
    pub d_out: usize,
}

pub enum Init {
    /// Uniform in `±1/√fan_in`.
    FanIn,
    Zeros,
}

fn init_tensor(shape: &[usize], init: &Init, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if let Init::FanIn = init {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        for v in t.values_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    t
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = params.push(format!("{name}.weight"), init_tensor(&[d_in, d_out], &init, d_in, rng));
        let bias = bias.then(|| params.push(format!("{name}.bias"), Tensor::zeros(&[1, d_out])));
        Self { weight, bias, d_in, d_out }
    }

    pub fn param_count(d_in: usize, d_out: usize, bias: bool) -> usize {
        d_in * d_out + if bias { d_out } else { 0 }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var, TensorError> {
        let y = g.matmul(x, vars[self.weight])?;
        match self.bias {
            Some(b) => g.add_row(y, vars[b]),
            None => Ok(y),
        }
    }
}

/// Gain and bias of a layer norm, initialized to one and zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Norm {
    pub gain: usize,
    pub bias: usize,
}

impl Norm {
    pub fn new(params: &mut ParamSet, name: &str, d: usize) -> Self {
        let gain = params.push(format!("{name}.gain"), Tensor::full(&[1, d], 1.0));
        let bias = params.push(format!("{name}.bias"), Tensor::zeros(&[1, d]));
        Self { gain, bias }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var, TensorError> {
        g.layer_norm(x, vars[self.gain], vars[self.bias])
    }
}

/// Records every parameter as a tracked leaf, in order.
pub fn bind(g: &mut Graph, params: &ParamSet) -> Vec<Var> {
    params.tensors().iter().map(|t| g.param(t)).collect()
}

/// Records every parameter as an untracked leaf (inference only).
pub fn bind_frozen(g: &mut Graph, params: &ParamSet) -> Vec<Var> {
    params.tensors().iter().map(|t| g.constant(t.clone().with_requires_grad(false))).collect()
}
