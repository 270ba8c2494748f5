//! Conditional flow matching along straight paths from Gaussian noise to data.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backbone::{ModelCheckpoint, VelocityField, VelocityModel};
use crate::conditioning::{Conditioner, ConditioningBundle, DropoutDraw, DropoutRates, PromptSpec};
use crate::lrc::LrcDocument;
use crate::numeric::{Adam, Graph, Tensor, TensorError};
use crate::{Error, Result};

/// `x_t = (1 − t)·x0 + t·x1`.
pub fn interpolate(x0: &Tensor, x1: &Tensor, t: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("time {t} outside [0, 1]")));
    }
    Ok(x0.zip_map(x1, |a, b| (1.0 - t) * a + t * b)?)
}

/// `u = x1 − x0`, the same for every `t`.
pub fn target_velocity(x0: &Tensor, x1: &Tensor) -> Result<Tensor> {
    Ok(x1.sub(x0)?)
}

pub fn standard_normal(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let mut x = Tensor::zeros(shape);
    for v in x.values_mut() {
        *v = rng.sample(StandardNormal);
    }
    x
}

/// The random quantities of one loss term: time, noise endpoint and dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmDraw {
    pub t: f64,
    pub x0: Tensor,
    pub dropout: DropoutDraw,
}

impl CfmDraw {
    /// Consumes, in order: `t`, the noise entries, then three dropout uniforms.
    pub fn sample(shape: &[usize], rates: &DropoutRates, rng: &mut impl Rng) -> Self {
        let t = rng.random::<f64>();
        let x0 = standard_normal(shape, rng);
        let dropout = DropoutDraw::sample(rates, rng);
        Self { t, x0, dropout }
    }
}

/// One training pair: a clean latent and the conditioning that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub x1: Tensor,
    pub spec: PromptSpec,
    pub doc: LrcDocument,
}

/// A training pair with its conditioning already encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub x1: Tensor,
    pub cond: ConditioningBundle,
}

pub fn encode_examples(conditioner: &Conditioner, examples: &[TrainExample]) -> Result<Vec<EncodedExample>> {
    examples
        .iter()
        .map(|e| {
            let (cond, _) = conditioner.encode(&e.spec, &e.doc, e.x1.rows())?;
            Ok(EncodedExample { x1: e.x1.clone(), cond })
        })
        .collect()
}

/// Loss of `field` on one example under a fixed draw.
pub fn cfm_loss_on_draw(field: &dyn VelocityField, example: &EncodedExample, draw: &CfmDraw) -> Result<f64> {
    let cond = draw.dropout.apply(example.cond.clone());
    let x_t = interpolate(&draw.x0, &example.x1, draw.t)?;
    let u = target_velocity(&draw.x0, &example.x1)?;
    let v = field.velocity(&x_t, &cond, draw.t)?;
    let err = v.zip_map(&u, |a, b| (a - b) * (a - b))?;
    Ok(err.mean())
}

/// Mean loss over a batch, drawing `t`, `x0` and dropout per element.
pub fn cfm_loss(
    field: &dyn VelocityField,
    batch: &[EncodedExample],
    rates: &DropoutRates,
    rng: &mut impl Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        let draw = CfmDraw::sample(ex.x1.shape(), rates, rng);
        total += cfm_loss_on_draw(field, ex, &draw)?;
    }
    Ok(total / batch.len() as f64)
}

/// Adds `weight · ∂loss/∂θ` into the model's gradients and returns the loss.
pub fn accumulate_cfm_grad(
    model: &mut VelocityModel,
    example: &EncodedExample,
    draw: &CfmDraw,
    weight: f64,
) -> Result<f64> {
    let cond = draw.dropout.apply(example.cond.clone());
    let x_t = interpolate(&draw.x0, &example.x1, draw.t)?;
    let u = target_velocity(&draw.x0, &example.x1)?;
    let full = model.prepare(&x_t, &cond, draw.t)?;
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let v = model.forward_on(&mut g, &bound, &full, None)?;
    let target = g.constant(u);
    let mse = g.mse(v, target)?;
    let loss = g.scalar(mse);
    if !loss.is_finite() {
        return Err(Error::Tensor(TensorError::NonFinite(format!("loss {loss}"))));
    }
    let scaled = g.scale(mse, weight);
    g.backward(scaled)?;
    model.accumulate_grads(&g, &bound)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub p_drop_global: f64,
    pub p_drop_segment: f64,
    /// Defaults to `p_drop_global`.
    pub p_drop_lyrics: Option<f64>,
    pub seed: u64,
    /// Emit a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            learning_rate: 1e-3,
            p_drop_global: 0.2,
            p_drop_segment: 0.2,
            p_drop_lyrics: None,
            seed: 0,
            checkpoint_every: 0,
            max_grad_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn dropout(&self) -> DropoutRates {
        DropoutRates {
            global: self.p_drop_global,
            segment: self.p_drop_segment,
            lyrics: self.p_drop_lyrics.unwrap_or(self.p_drop_global),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Contract("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Contract("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Contract(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if let Some(m) = self.max_grad_norm {
            if !(m > 0.0) {
                return Err(Error::Contract(format!("max_grad_norm {m} must be positive")));
            }
        }
        self.dropout().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub batch: Vec<usize>,
    pub dropped: DropCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropCounts {
    pub global: usize,
    pub segment: usize,
    pub lyrics: usize,
}

impl DropCounts {
    fn add(&mut self, d: &DropoutDraw) {
        self.global += d.global as usize;
        self.segment += d.segment as usize;
        self.lyrics += d.lyrics as usize;
    }
}

/// A log line: step, loss and elapsed wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub dropped: DropCounts,
    pub samples_seen: usize,
    pub wall_ms: u64,
}

impl TrainReport {
    /// Mean loss over the first `window` steps and over the last `window` steps.
    pub fn smoothed_ends(&self, window: usize) -> (f64, f64) {
        let w = window.clamp(1, self.losses.len().max(1));
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (mean(&self.losses[..w.min(self.losses.len())]), mean(&self.losses[self.losses.len().saturating_sub(w)..]))
    }
}

/// What the training loop reports while running.
pub enum TrainEvent<'a> {
    Step { record: &'a StepRecord, wall_ms: u64 },
    Checkpoint { step: usize, checkpoint: ModelCheckpoint },
}

/// Draws batch indices from freshly shuffled epochs.
struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self { order: (0..n).collect(), cursor: n, rng: ChaCha8Rng::seed_from_u64(seed) };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.cursor == self.order.len() {
                    self.reshuffle();
                }
                self.cursor += 1;
                self.order[self.cursor - 1]
            })
            .collect()
    }
}

fn clip_gradients(model: &mut VelocityModel, max_norm: f64) -> Result<f64, TensorError> {
    let norm = model.param_sets().iter().map(|s| s.grad_norm().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for set in model.param_sets_mut() {
            for t in set.tensors_mut() {
                if let Some(g) = t.grad() {
                    let scaled: Vec<f64> = g.iter().map(|v| v * s).collect();
                    t.clear_grad();
                    t.accumulate_grad(&scaled)?;
                }
            }
        }
    }
    Ok(norm)
}

/// Seed of the batch-order stream, kept apart from the per-sample draw stream.
fn order_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Trains `model` on encoded examples and calls `on_event` after every step and checkpoint.
pub fn train_with(
    model: &mut VelocityModel,
    data: &[EncodedExample],
    config: &TrainConfig,
    on_event: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let rates = config.dropout();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = EpochSampler::new(data.len(), order_seed(config.seed));
    let mut optim = [Adam::new(config.learning_rate), Adam::new(config.learning_rate)];
    let start = Instant::now();
    let mut report = TrainReport { losses: Vec::with_capacity(config.steps), dropped: DropCounts::default(), samples_seen: 0, wall_ms: 0 };
    let weight = 1.0 / config.batch_size as f64;

    for step in 0..config.steps {
        let batch = order.next_batch(config.batch_size);
        model.zero_grads();
        let mut loss = 0.0;
        let mut dropped = DropCounts::default();
        for &i in &batch {
            let ex = &data[i];
            let draw = CfmDraw::sample(ex.x1.shape(), &rates, &mut rng);
            dropped.add(&draw.dropout);
            loss += weight
                * accumulate_cfm_grad(model, ex, &draw, weight).map_err(|e| match e {
                    Error::Tensor(TensorError::NonFinite(d)) => {
                        Error::NumericAbort { step, detail: format!("{d} in batch {batch:?}") }
                    }
                    other => other,
                })?;
        }
        let grad_norm = match config.max_grad_norm {
            Some(m) => clip_gradients(model, m)?,
            None => model.param_sets().iter().map(|s| s.grad_norm().powi(2)).sum::<f64>().sqrt(),
        };
        if !grad_norm.is_finite() {
            return Err(Error::NumericAbort { step, detail: format!("gradient norm {grad_norm} in batch {batch:?}") });
        }
        for (opt, set) in optim.iter_mut().zip(model.param_sets_mut()) {
            opt.step(set.tensors_mut())?;
        }
        report.losses.push(loss);
        report.dropped.global += dropped.global;
        report.dropped.segment += dropped.segment;
        report.dropped.lyrics += dropped.lyrics;
        report.samples_seen += batch.len();
        let record = StepRecord { step, loss, grad_norm, batch, dropped };
        on_event(TrainEvent::Step { record: &record, wall_ms: start.elapsed().as_millis() as u64 })?;
        let done = step + 1;
        if done == config.steps || (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
            on_event(TrainEvent::Checkpoint { step: done, checkpoint: model.to_checkpoint() })?;
        }
    }
    model.zero_grads();
    report.wall_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

pub fn train(model: &mut VelocityModel, data: &[EncodedExample], config: &TrainConfig) -> Result<TrainReport> {
    train_with(model, data, config, &mut |_| Ok(()))
}
