//! Euler integration from noise to data under conditional, unconditional and
//! negative guidance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::VelocityField;
use crate::conditioning::{Conditioner, ConditioningBundle, NegativePrompt, PromptSpec};
use crate::flow::standard_normal;
use crate::lrc::LrcDocument;
use crate::numeric::{Tensor, TensorError};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub cfg: f64,
    pub cfg_n: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { cfg: 3.0, cfg_n: 1.0, steps: 32, seed: 0 }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Contract("sampling needs at least one step".into()));
        }
        if !(self.cfg.is_finite() && self.cfg_n.is_finite()) {
            return Err(Error::Contract("guidance scales must be finite".into()));
        }
        Ok(())
    }

    /// Coefficients `(w_c, w_u, w_n)` of the guided field `w_c·v_c + w_u·v_u + w_n·v_n`.
    pub fn weights(&self) -> [f64; 3] {
        [self.cfg, 1.0 - self.cfg + self.cfg_n, -self.cfg_n]
    }
}

/// Conditional, unconditional and negative bundles of one request.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTriple {
    pub conditional: ConditioningBundle,
    pub unconditional: ConditioningBundle,
    pub negative: ConditioningBundle,
}

impl ConditionTriple {
    pub fn build(conditioner: &Conditioner, spec: &PromptSpec, doc: &LrcDocument, frames: usize) -> Result<Self> {
        let (conditional, _) = conditioner.encode(spec, doc, frames)?;
        let negative = build_negative_condition(conditioner, spec, &NegativePrompt::default(), frames)?;
        Ok(Self { conditional, unconditional: conditioner.unconditional(frames), negative })
    }

    fn check(&self) -> Result<(), TensorError> {
        let shape = |b: &ConditioningBundle| {
            [b.global.shape(), b.segment.shape(), b.lyrics.shape(), b.audio.shape(), b.time.shape()].map(<[usize]>::to_vec)
        };
        let c = shape(&self.conditional);
        if shape(&self.unconditional) != c || shape(&self.negative) != c {
            return Err(TensorError::Shape("condition bundles disagree in shape".into()));
        }
        Ok(())
    }
}

/// `v_u + cfg·(v_c − v_u) − cfg_n·(v_n − v_u)`.
///
/// Evaluated as `w_c·v_c + w_u·v_u + w_n·v_n`; a unit weight uses its input
/// as-is and zero-weight terms are skipped, so `cfg = 1, cfg_n = 0` returns `v_c`
/// exactly.
pub fn guided_velocity(v_u: &Tensor, v_c: &Tensor, v_n: &Tensor, cfg: f64, cfg_n: f64) -> Result<Tensor> {
    v_u.same_shape(v_c)?;
    v_u.same_shape(v_n)?;
    let gc = GuidanceConfig { cfg, cfg_n, ..GuidanceConfig::default() };
    Ok(combine(&gc.weights(), [Some(v_c), Some(v_u), Some(v_n)], v_u.shape()))
}

fn combine(weights: &[f64; 3], parts: [Option<&Tensor>; 3], shape: &[usize]) -> Tensor {
    let mut terms = weights.iter().zip(parts).filter(|(w, _)| **w != 0.0);
    let Some((&w0, Some(first))) = terms.next() else {
        return Tensor::zeros(shape);
    };
    let mut out = if w0 == 1.0 { first.clone() } else { first.scale(w0) };
    for (&w, part) in terms {
        if let Some(p) = part {
            for (o, v) in out.values_mut().iter_mut().zip(p.values()) {
                *o += if w == 1.0 { *v } else { w * v };
            }
        }
    }
    out
}

/// Lyrics removed; global and every segment text replaced, windows kept.
pub fn build_negative_condition(
    conditioner: &Conditioner,
    spec: &PromptSpec,
    defaults: &NegativePrompt,
    frames: usize,
) -> Result<ConditioningBundle> {
    let neg = spec.negative.as_ref().unwrap_or(defaults);
    let mut replaced = spec.clone();
    replaced.global = neg.global.clone();
    for s in &mut replaced.segments {
        s.text = neg.segment.clone();
    }
    let empty = LrcDocument::empty(1.0)?;
    let (mut bundle, _) = conditioner.encode(&replaced, &empty, frames)?;
    bundle.drop_lyrics = true;
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub step: usize,
    pub t: f64,
    pub velocity_rms: f64,
    pub latent_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub latent: Tensor,
    pub diagnostics: Vec<StepDiagnostic>,
}

fn rms(t: &Tensor) -> f64 {
    (t.values().iter().map(|v| v * v).sum::<f64>() / t.len().max(1) as f64).sqrt()
}

/// Integrates from `x_init` with `t_k = k/steps`, evaluating the field at the left endpoint.
pub fn euler_integrate(
    field: &dyn VelocityField,
    triple: &ConditionTriple,
    gc: &GuidanceConfig,
    x_init: Tensor,
) -> Result<SampleOutput> {
    gc.validate()?;
    triple.check()?;
    let weights = gc.weights();
    let dt = 1.0 / gc.steps as f64;
    let mut x = x_init;
    let mut diagnostics = Vec::with_capacity(gc.steps);
    for k in 0..gc.steps {
        let t = k as f64 / gc.steps as f64;
        let eval = |w: f64, cond: &ConditioningBundle| -> Result<Option<Tensor>> {
            if w == 0.0 {
                Ok(None)
            } else {
                field.velocity(&x, cond, t).map(Some)
            }
        };
        let v_c = eval(weights[0], &triple.conditional)?;
        let v_u = eval(weights[1], &triple.unconditional)?;
        let v_n = eval(weights[2], &triple.negative)?;
        let v = combine(&weights, [v_c.as_ref(), v_u.as_ref(), v_n.as_ref()], x.shape());
        if v.shape() != x.shape() {
            return Err(TensorError::Shape(format!("field returned {:?} for {:?}", v.shape(), x.shape())).into());
        }
        for (xi, vi) in x.values_mut().iter_mut().zip(v.values()) {
            *xi += dt * vi;
        }
        if !x.is_finite() {
            return Err(Error::NumericAbort { step: k, detail: "non-finite latent during sampling".into() });
        }
        diagnostics.push(StepDiagnostic { step: k, t, velocity_rms: rms(&v), latent_rms: rms(&x) });
    }
    Ok(SampleOutput { latent: x, diagnostics })
}

/// Samples `x_init ~ N(0, I)` of shape `frames × d_audio` from `gc.seed`, then integrates.
pub fn euler_sample(
    field: &dyn VelocityField,
    triple: &ConditionTriple,
    gc: &GuidanceConfig,
    frames: usize,
    d_audio: usize,
) -> Result<SampleOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    euler_integrate(field, triple, gc, standard_normal(&[frames, d_audio], &mut rng))
}

#[cfg(test)]
mod tests;
