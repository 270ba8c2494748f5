//! Global and segment prompts, and their frame-level text embedding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TextEmbedder;
use crate::lrc::{FrameRate, SegmentKind};
use crate::nn::{self, Init, Linear};
use crate::numeric::{concat_cols, Graph, ParamSet, Tensor, TensorError, Var};
use crate::{Error, Result};

/// A timed segment prompt `[start, end)` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    #[serde(rename = "start_s")]
    pub start: f64,
    #[serde(rename = "end_s")]
    pub end: f64,
    pub text: String,
    #[serde(default = "default_kind")]
    pub kind: SegmentKind,
}

fn default_kind() -> SegmentKind {
    SegmentKind::Lyric
}

impl SegmentSpec {
    pub fn new(start: f64, end: f64, text: impl Into<String>, kind: SegmentKind) -> Self {
        Self { start, end, text: text.into(), kind }
    }
}

/// Replacement texts for the negative guidance branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativePrompt {
    pub global: String,
    pub segment: String,
}

impl Default for NegativePrompt {
    fn default() -> Self {
        Self { global: "low quality, noisy".into(), segment: "low quality".into() }
    }
}

/// One global prompt plus sorted, non-overlapping segment prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub global: String,
    #[serde(default)]
    pub segments: Vec<SegmentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<NegativePrompt>,
}

impl PromptSpec {
    pub fn new(global: impl Into<String>, segments: Vec<SegmentSpec>) -> Result<Self> {
        let spec = Self { global: global.into(), segments, negative: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite() && s.start >= 0.0 && s.start < s.end) {
                return Err(Error::Data(format!("segment {i} has bad span [{}, {})", s.start, s.end)));
            }
            if s.start < prev_end {
                return Err(Error::Data(format!(
                    "segment {i} starts at {} before the previous segment ends at {prev_end}",
                    s.start
                )));
            }
            prev_end = s.end;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PromptSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Frame window `[⌊t_s·rate⌋, ⌊t_e·rate⌋)` of every segment, which must end by `frames`.
    pub fn frame_windows(&self, rate: FrameRate, frames: usize) -> Result<Vec<(usize, usize)>> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (a, b) = (rate.frame(s.start)?, rate.frame(s.end)?);
                if b > frames {
                    return Err(Error::Contract(format!(
                        "segment {i} window {a}..{b} exceeds {frames} frames"
                    )));
                }
                Ok((a, b))
            })
            .collect()
    }
}

/// Prompt halves before projection: the broadcast global embedding and the
/// windowed segment embedding (zero outside every window).
pub fn encode_prompt_halves(
    spec: &PromptSpec,
    frames: usize,
    global: &dyn TextEmbedder,
    segment: &dyn TextEmbedder,
    rate: FrameRate,
) -> Result<(Tensor, Tensor)> {
    if frames == 0 {
        return Err(Error::Contract("need at least one frame".into()));
    }
    let windows = spec.frame_windows(rate, frames)?;
    let e_g = Tensor::repeat_row(&global.embed(&spec.global), frames);
    let d_l = segment.dim();
    let mut e_l = Tensor::zeros(&[frames, d_l]);
    for (s, (a, b)) in spec.segments.iter().zip(windows) {
        let row = segment.embed(&s.text);
        for f in a..b {
            e_l.row_mut(f).copy_from_slice(&row);
        }
    }
    Ok((e_g, e_l))
}

/// Three-layer MLP from `[E_g ‖ E_l]` to `d_text` channels:
/// linear → silu → linear → silu → linear.
#[derive(Debug, Clone, PartialEq)]
pub struct TextProjection {
    params: ParamSet,
    layers: [Linear; 3],
}

impl TextProjection {
    pub fn new(d_in: usize, hidden: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let layers = [
            Linear::new(&mut params, "text_proj.0", d_in, hidden, true, Init::FanIn, rng),
            Linear::new(&mut params, "text_proj.1", hidden, hidden, true, Init::FanIn, rng),
            Linear::new(&mut params, "text_proj.2", hidden, d_out, true, Init::FanIn, rng),
        ];
        Self { params, layers }
    }

    pub fn param_count(d_in: usize, hidden: usize, d_out: usize) -> usize {
        Linear::param_count(d_in, hidden, true)
            + Linear::param_count(hidden, hidden, true)
            + Linear::param_count(hidden, d_out, true)
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers[2].d_out
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Applies the projection to `x` given this module's bound parameters.
    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var, TensorError> {
        let h = self.layers[0].apply(g, vars, x)?;
        let h = g.silu(h);
        let h = self.layers[1].apply(g, vars, h)?;
        let h = g.silu(h);
        self.layers[2].apply(g, vars, h)
    }

    pub fn project(&self, e_cat: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = nn::bind_frozen(&mut g, &self.params);
        let x = g.constant(e_cat.clone());
        let y = self.apply(&mut g, &vars, x)?;
        Ok(g.tensor(y))
    }
}

/// `out_proj(concat(repeat(f_g(x_g)), E_l))`, a `frames × d_text` matrix.
pub fn encode_prompts(
    spec: &PromptSpec,
    frames: usize,
    global: &dyn TextEmbedder,
    segment: &dyn TextEmbedder,
    projection: &TextProjection,
    rate: FrameRate,
) -> Result<Tensor> {
    let (e_g, e_l) = encode_prompt_halves(spec, frames, global, segment, rate)?;
    if e_g.cols() + e_l.cols() != projection.d_in() {
        return Err(Error::Tensor(TensorError::Shape(format!(
            "projection expects {} channels, prompts give {}",
            projection.d_in(),
            e_g.cols() + e_l.cols()
        ))));
    }
    projection.project(&concat_cols(&[&e_g, &e_l])?)
}
