//! A small pre-norm transformer that predicts the velocity field over latent frames.
//!
//! The model input is the channel concat of projected prompt text, lyric
//! features, the noisy latent `x_t` and a broadcast time embedding. There is no
//! positional encoding: frame identity comes only from the conditioning.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditioningBundle, ConditioningDims, TextProjection};
use crate::nn::{self, Init, Linear, Norm};
use crate::numeric::{Graph, ParamRecord, ParamSet, Tensor, TensorError, Var};
use crate::{Error, Result};

/// Sinusoidal features `(sin ω_k t, cos ω_k t)` with `ω_k` spaced geometrically over `[1, 1000]`.
pub fn time_embedding(t: f64, d_t: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("time {t} outside [0, 1]")));
    }
    if d_t == 0 || !d_t.is_multiple_of(2) {
        return Err(Error::Contract(format!("time embedding width {d_t} must be even and positive")));
    }
    let n = d_t / 2;
    let mut out = Vec::with_capacity(d_t);
    for k in 0..n {
        let omega = if n == 1 { 1.0 } else { 1000f64.powf(k as f64 / (n - 1) as f64) };
        out.push((omega * t).sin());
        out.push((omega * t).cos());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub model_width: usize,
    pub n_heads: usize,
    pub ffn_hidden: usize,
    #[serde(flatten)]
    pub dims: ConditioningDims,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n_blocks: 2, model_width: 64, n_heads: 4, ffn_hidden: 128, dims: ConditioningDims::default() }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.n_blocks == 0 || self.model_width == 0 || self.n_heads == 0 || self.ffn_hidden == 0 {
            return Err(Error::Contract("model sizes must be positive".into()));
        }
        if !self.model_width.is_multiple_of(self.n_heads) {
            return Err(Error::Contract(format!(
                "model_width {} is not divisible by n_heads {}",
                self.model_width, self.n_heads
            )));
        }
        Ok(())
    }

    /// Total scalar parameters:
    ///
    /// ```text
    /// text   = (d_g + d_l)·d_text + d_text + 2·(d_text² + d_text)
    /// input  = (d_text + d_lyrics + d_audio + d_t)·W + W
    /// block  = 4·W (two norms) + 4·W² (attention) + 3·W·H (gated feed-forward)
    /// output = 2·W (final norm) + W·d_audio + d_audio
    /// ```
    pub fn param_count(&self) -> usize {
        let d = &self.dims;
        let w = self.model_width;
        let text = TextProjection::param_count(d.d_global + d.d_segment, d.d_text, d.d_text);
        let input = d.input_width() * w + w;
        let block = 4 * w + 4 * w * w + 3 * w * self.ffn_hidden;
        let output = 2 * w + w * d.d_audio + d.d_audio;
        text + input + self.n_blocks * block + output
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    attn_norm: Norm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    ffn_norm: Norm,
    w1: Linear,
    w2: Linear,
    w3: Linear,
}

/// Parameter handles of one model on one graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub text: Vec<Var>,
    pub body: Vec<Var>,
}

/// Predicts the velocity of a latent trajectory given its conditioning.
pub trait VelocityField: Sync {
    /// `cond` carries the conditioning streams; its audio and time slots are ignored.
    fn velocity(&self, x_t: &Tensor, cond: &ConditioningBundle, t: f64) -> Result<Tensor>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    config: ModelConfig,
    projection: TextProjection,
    params: ParamSet,
    in_proj: Linear,
    blocks: Vec<Block>,
    final_norm: Norm,
    head: Linear,
}

/// Serialized model: its config plus every parameter, projection first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub params: Vec<ParamRecord>,
}

impl VelocityModel {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = &config.dims;
        let w = config.model_width;
        let projection = TextProjection::new(d.d_global + d.d_segment, d.d_text, d.d_text, rng);
        let mut p = ParamSet::new();
        let in_proj = Linear::new(&mut p, "in_proj", d.input_width(), w, true, Init::FanIn, rng);
        let blocks = (0..config.n_blocks)
            .map(|i| {
                let name = |s: &str| format!("blocks.{i}.{s}");
                Block {
                    attn_norm: Norm::new(&mut p, &name("attn_norm"), w),
                    wq: Linear::new(&mut p, &name("attn.wq"), w, w, false, Init::FanIn, rng),
                    wk: Linear::new(&mut p, &name("attn.wk"), w, w, false, Init::FanIn, rng),
                    wv: Linear::new(&mut p, &name("attn.wv"), w, w, false, Init::FanIn, rng),
                    wo: Linear::new(&mut p, &name("attn.wo"), w, w, false, Init::FanIn, rng),
                    ffn_norm: Norm::new(&mut p, &name("ffn_norm"), w),
                    w1: Linear::new(&mut p, &name("ffn.w1"), w, config.ffn_hidden, false, Init::FanIn, rng),
                    w2: Linear::new(&mut p, &name("ffn.w2"), config.ffn_hidden, w, false, Init::FanIn, rng),
                    w3: Linear::new(&mut p, &name("ffn.w3"), w, config.ffn_hidden, false, Init::FanIn, rng),
                }
            })
            .collect();
        let final_norm = Norm::new(&mut p, "final_norm", w);
        let head = Linear::new(&mut p, "head", w, d.d_audio, true, Init::Zeros, rng);
        Ok(Self { config, projection, params: p, in_proj, blocks, final_norm, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn projection(&self) -> &TextProjection {
        &self.projection
    }

    pub fn param_count(&self) -> usize {
        self.projection.params().scalar_count() + self.params.scalar_count()
    }

    /// The projection's parameters and the backbone's, in checkpoint order.
    pub fn param_sets(&self) -> [&ParamSet; 2] {
        [self.projection.params(), &self.params]
    }

    pub fn param_sets_mut(&mut self) -> [&mut ParamSet; 2] {
        [self.projection.params_mut(), &mut self.params]
    }

    pub fn zero_grads(&mut self) {
        for p in self.param_sets_mut() {
            p.zero_grads();
        }
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound { text: nn::bind(g, self.projection.params()), body: nn::bind(g, &self.params) }
    }

    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound { text: nn::bind_frozen(g, self.projection.params()), body: nn::bind_frozen(g, &self.params) }
    }

    /// Adds the gradients collected on `g` for `bound` into the parameters.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &Bound) -> Result<(), TensorError> {
        let [text, body] = self.param_sets_mut();
        for (v, t) in bound.text.iter().zip(text.tensors_mut()) {
            g.accumulate_into(*v, t)?;
        }
        for (v, t) in bound.body.iter().zip(body.tensors_mut()) {
            g.accumulate_into(*v, t)?;
        }
        Ok(())
    }

    fn check_bundle(&self, cond: &ConditioningBundle) -> Result<(), TensorError> {
        cond.check_frames()?;
        let d = &self.config.dims;
        let widths = [
            (cond.global.cols(), d.d_global),
            (cond.segment.cols(), d.d_segment),
            (cond.lyrics.cols(), d.d_lyrics),
            (cond.audio.cols(), d.d_audio),
            (cond.time.cols(), d.d_time),
        ];
        if widths.iter().any(|(a, b)| a != b) {
            return Err(TensorError::Shape(format!("bundle widths {widths:?} do not match the model")));
        }
        Ok(())
    }

    /// Forward pass on `g` for a bundle whose audio and time slots are already filled.
    /// Per-block attention weights are pushed into `attention` when given.
    pub fn forward_on(
        &self,
        g: &mut Graph,
        bound: &Bound,
        cond: &ConditioningBundle,
        mut attention: Option<&mut Vec<Vec<Tensor>>>,
    ) -> Result<Var> {
        self.check_bundle(cond)?;
        let halves = g.constant(cond.prompt_halves()?);
        let e_text = self.projection.apply(g, &bound.text, halves)?;
        let lyrics = g.constant(cond.lyrics.clone());
        let audio = g.constant(cond.audio.clone());
        let time = g.constant(cond.time.clone());
        let x = g.concat_channels(&[e_text, lyrics, audio, time])?;
        let v = &bound.body;
        let mut h = self.in_proj.apply(g, v, x)?;
        let heads = self.config.n_heads;
        let dh = self.config.model_width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for block in &self.blocks {
            let n = block.attn_norm.apply(g, v, h)?;
            let q = block.wq.apply(g, v, n)?;
            let k = block.wk.apply(g, v, n)?;
            let val = block.wv.apply(g, v, n)?;
            let mut outs = Vec::with_capacity(heads);
            let mut weights = Vec::new();
            for i in 0..heads {
                let (a, b) = (i * dh, (i + 1) * dh);
                let qh = g.slice_cols(q, a, b)?;
                let kh = g.slice_cols(k, a, b)?;
                let vh = g.slice_cols(val, a, b)?;
                let s = g.matmul_nt(qh, kh)?;
                let s = g.scale(s, scale);
                let p = g.softmax_rows(s)?;
                if attention.is_some() {
                    weights.push(g.tensor(p));
                }
                outs.push(g.matmul(p, vh)?);
            }
            if let Some(store) = attention.as_deref_mut() {
                store.push(weights);
            }
            let cat = g.concat_channels(&outs)?;
            let o = block.wo.apply(g, v, cat)?;
            h = g.add(h, o)?;
            let n = block.ffn_norm.apply(g, v, h)?;
            let a = block.w1.apply(g, v, n)?;
            let a = g.silu(a);
            let b = block.w3.apply(g, v, n)?;
            let gated = g.mul(a, b)?;
            let f = block.w2.apply(g, v, gated)?;
            h = g.add(h, f)?;
        }
        let h = self.final_norm.apply(g, v, h)?;
        Ok(self.head.apply(g, v, h)?)
    }

    /// Bundle with `x_t` and the embedding of `t` placed in their slots.
    pub fn prepare(&self, x_t: &Tensor, cond: &ConditioningBundle, t: f64) -> Result<ConditioningBundle> {
        let emb = time_embedding(t, self.config.dims.d_time)?;
        Ok(cond.with_state(x_t, &emb)?)
    }

    pub fn forward(&self, x_t: &Tensor, cond: &ConditioningBundle, t: f64) -> Result<Tensor> {
        let full = self.prepare(x_t, cond, t)?;
        let mut g = Graph::new();
        let bound = self.bind_frozen(&mut g);
        let out = self.forward_on(&mut g, &bound, &full, None)?;
        Ok(g.tensor(out))
    }

    /// Attention matrices, indexed by block then head.
    pub fn attention_weights(&self, x_t: &Tensor, cond: &ConditioningBundle, t: f64) -> Result<Vec<Vec<Tensor>>> {
        let full = self.prepare(x_t, cond, t)?;
        let mut g = Graph::new();
        let bound = self.bind_frozen(&mut g);
        let mut store = Vec::new();
        self.forward_on(&mut g, &bound, &full, Some(&mut store))?;
        Ok(store)
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        let mut params = self.projection.params().to_records();
        params.extend(self.params.to_records());
        ModelCheckpoint { config: self.config, params }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        // Initial values are overwritten, so any generator will do.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Self::new(ckpt.config, &mut rng)?;
        let split = model.projection.params().len();
        if ckpt.params.len() < split {
            return Err(Error::Data("checkpoint is missing text projection parameters".into()));
        }
        model.projection.params_mut().load_records(&ckpt.params[..split])?;
        model.params.load_records(&ckpt.params[split..])?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

impl VelocityField for VelocityModel {
    fn velocity(&self, x_t: &Tensor, cond: &ConditioningBundle, t: f64) -> Result<Tensor> {
        self.forward(x_t, cond, t)
    }
}

#[cfg(test)]
mod tests;
