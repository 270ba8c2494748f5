use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{encode_lyrics, encode_prompt_halves, stub_embedder, PromptSpec, TextEmbedder, TextProjection};
use crate::lrc::{FrameRate, LrcDocument};
use crate::numeric::{concat_cols, Tensor, TensorError};
use crate::{Error, Result};

/// Channel widths of every conditioning stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditioningDims {
    pub d_global: usize,
    pub d_segment: usize,
    pub d_text: usize,
    pub d_lyrics: usize,
    pub d_audio: usize,
    pub d_time: usize,
}

impl Default for ConditioningDims {
    fn default() -> Self {
        Self { d_global: 32, d_segment: 32, d_text: 32, d_lyrics: 16, d_audio: 8, d_time: 16 }
    }
}

impl ConditioningDims {
    /// Width of the assembled model input.
    pub fn input_width(&self) -> usize {
        self.d_text + self.d_lyrics + self.d_audio + self.d_time
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.d_global, self.d_segment, self.d_text, self.d_lyrics, self.d_audio, self.d_time];
        if all.contains(&0) {
            return Err(Error::Contract("conditioning widths must be positive".into()));
        }
        if !self.d_time.is_multiple_of(2) {
            return Err(Error::Contract("d_time must be even".into()));
        }
        Ok(())
    }
}

/// Every per-frame conditioning stream of one sample. The prompt halves are kept
/// before projection so the projection trains with the backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub global: Tensor,
    pub segment: Tensor,
    pub lyrics: Tensor,
    pub audio: Tensor,
    pub time: Tensor,
    pub drop_global: bool,
    pub drop_segment: bool,
    pub drop_lyrics: bool,
}

impl ConditioningBundle {
    /// All streams zero.
    pub fn zeros(frames: usize, dims: &ConditioningDims) -> Self {
        Self {
            global: Tensor::zeros(&[frames, dims.d_global]),
            segment: Tensor::zeros(&[frames, dims.d_segment]),
            lyrics: Tensor::zeros(&[frames, dims.d_lyrics]),
            audio: Tensor::zeros(&[frames, dims.d_audio]),
            time: Tensor::zeros(&[frames, dims.d_time]),
            drop_global: false,
            drop_segment: false,
            drop_lyrics: false,
        }
    }

    pub fn frames(&self) -> usize {
        self.global.rows()
    }

    /// `[E_g ‖ E_l]`, the projection input.
    pub fn prompt_halves(&self) -> Result<Tensor, TensorError> {
        concat_cols(&[&self.global, &self.segment])
    }

    pub fn check_frames(&self) -> Result<(), TensorError> {
        let t = self.frames();
        for (name, m) in [
            ("segment", &self.segment),
            ("lyrics", &self.lyrics),
            ("audio", &self.audio),
            ("time", &self.time),
        ] {
            if m.rows() != t {
                return Err(TensorError::Shape(format!("{name} has {} frames, global has {t}", m.rows())));
            }
        }
        Ok(())
    }

    /// Copy with `x_t` in the audio slot and the time embedding broadcast over frames.
    pub fn with_state(&self, x_t: &Tensor, time_row: &[f64]) -> Result<Self, TensorError> {
        if x_t.shape() != self.audio.shape() {
            return Err(TensorError::Shape(format!(
                "x_t is {:?}, audio slot is {:?}",
                x_t.shape(),
                self.audio.shape()
            )));
        }
        if time_row.len() != self.time.cols() {
            return Err(TensorError::Shape(format!(
                "time embedding has {} channels, slot has {}",
                time_row.len(),
                self.time.cols()
            )));
        }
        let mut out = self.clone();
        out.audio = x_t.clone();
        out.time = Tensor::repeat_row(time_row, self.frames());
        Ok(out)
    }
}

/// Channel concat `(E_text, E_lyrics, E_audio, E_t)` with `E_text` projected from the halves.
pub fn assemble_input(bundle: &ConditioningBundle, projection: &TextProjection) -> Result<Tensor> {
    bundle.check_frames()?;
    let e_text = projection.project(&bundle.prompt_halves()?)?;
    Ok(concat_cols(&[&e_text, &bundle.lyrics, &bundle.audio, &bundle.time])?)
}

/// Per-sample condition dropout probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutRates {
    pub global: f64,
    pub segment: f64,
    pub lyrics: f64,
}

impl DropoutRates {
    /// Lyrics follow the global rate.
    pub fn new(global: f64, segment: f64) -> Self {
        Self { global, segment, lyrics: global }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.global, self.segment, self.lyrics] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Contract(format!("dropout probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Which streams one dropout draw removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropoutDraw {
    pub global: bool,
    pub segment: bool,
    pub lyrics: bool,
}

impl DropoutDraw {
    /// Three independent uniforms, always consumed in the order global, segment, lyrics.
    pub fn sample(rates: &DropoutRates, rng: &mut impl Rng) -> Self {
        let (g, s, l): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        Self { global: g < rates.global, segment: s < rates.segment, lyrics: l < rates.lyrics }
    }

    pub fn apply(&self, mut bundle: ConditioningBundle) -> ConditioningBundle {
        if self.global {
            bundle.global.values_mut().fill(0.0);
            bundle.drop_global = true;
        }
        if self.segment {
            bundle.segment.values_mut().fill(0.0);
            bundle.drop_segment = true;
        }
        if self.lyrics {
            bundle.lyrics.values_mut().fill(0.0);
            bundle.drop_lyrics = true;
        }
        bundle
    }
}

pub fn apply_condition_dropout(
    bundle: ConditioningBundle,
    rates: &DropoutRates,
    rng: &mut impl Rng,
) -> Result<ConditioningBundle> {
    rates.validate()?;
    Ok(DropoutDraw::sample(rates, rng).apply(bundle))
}

/// Text embedders and frame rate that turn prompts and lyrics into a bundle.
pub struct Conditioner {
    global: Box<dyn TextEmbedder>,
    segment: Box<dyn TextEmbedder>,
    lyric: Box<dyn TextEmbedder>,
    rate: FrameRate,
    dims: ConditioningDims,
}

impl std::fmt::Debug for Conditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Conditioner").field("rate", &self.rate).field("dims", &self.dims).finish()
    }
}

impl Conditioner {
    pub fn new(
        global: Box<dyn TextEmbedder>,
        segment: Box<dyn TextEmbedder>,
        lyric: Box<dyn TextEmbedder>,
        rate: FrameRate,
        dims: ConditioningDims,
    ) -> Result<Self> {
        dims.validate()?;
        for (name, e, d) in [
            ("global", &global, dims.d_global),
            ("segment", &segment, dims.d_segment),
            ("lyric", &lyric, dims.d_lyrics),
        ] {
            if e.dim() != d {
                return Err(Error::Contract(format!("{name} embedder has width {}, expected {d}", e.dim())));
            }
        }
        Ok(Self { global, segment, lyric, rate, dims })
    }

    /// Hash-keyed stub embedders for all three text streams.
    pub fn stub(dims: ConditioningDims, rate: FrameRate) -> Result<Self> {
        Self::new(
            Box::new(stub_embedder("global", dims.d_global)?),
            Box::new(stub_embedder("segment", dims.d_segment)?),
            Box::new(stub_embedder("lyric", dims.d_lyrics)?),
            rate,
            dims,
        )
    }

    pub fn dims(&self) -> &ConditioningDims {
        &self.dims
    }

    pub fn rate(&self) -> FrameRate {
        self.rate
    }

    pub fn global_embedder(&self) -> &dyn TextEmbedder {
        self.global.as_ref()
    }

    pub fn segment_embedder(&self) -> &dyn TextEmbedder {
        self.segment.as_ref()
    }

    pub fn lyric_embedder(&self) -> &dyn TextEmbedder {
        self.lyric.as_ref()
    }

    /// Conditional bundle with zero audio and time slots, plus the lyric truncation count.
    pub fn encode(&self, spec: &PromptSpec, doc: &LrcDocument, frames: usize) -> Result<(ConditioningBundle, usize)> {
        let (global, segment) =
            encode_prompt_halves(spec, frames, self.global.as_ref(), self.segment.as_ref(), self.rate)?;
        let lyrics = encode_lyrics(doc, self.lyric.as_ref(), frames, self.rate)?;
        let mut bundle = ConditioningBundle::zeros(frames, &self.dims);
        bundle.global = global;
        bundle.segment = segment;
        bundle.lyrics = lyrics.features;
        Ok((bundle, lyrics.truncated))
    }

    pub fn unconditional(&self, frames: usize) -> ConditioningBundle {
        let mut b = ConditioningBundle::zeros(frames, &self.dims);
        b.drop_global = true;
        b.drop_segment = true;
        b.drop_lyrics = true;
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::SegmentSpec;
    use crate::lrc::{LrcLine, SegmentKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_dims() -> ConditioningDims {
        ConditioningDims { d_global: 3, d_segment: 2, d_text: 4, d_lyrics: 3, d_audio: 2, d_time: 2 }
    }

    fn filled(frames: usize, dims: &ConditioningDims, rng: &mut impl Rng) -> ConditioningBundle {
        let mut b = ConditioningBundle::zeros(frames, dims);
        for m in [&mut b.global, &mut b.segment, &mut b.lyrics, &mut b.audio, &mut b.time] {
            for v in m.values_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        b
    }

    #[test]
    fn zero_bundle_assembles_to_projected_zero_and_zeros() {
        let dims = small_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let proj = TextProjection::new(5, 4, 4, &mut rng);
        let x = assemble_input(&ConditioningBundle::zeros(6, &dims), &proj).unwrap();
        assert_eq!(x.shape(), &[6, dims.input_width()]);
        let tail = x.slice_cols(4, dims.input_width()).unwrap();
        assert!(tail.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slices_recover_components() {
        let dims = small_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let proj = TextProjection::new(5, 4, 4, &mut rng);
        let b = filled(7, &dims, &mut rng);
        let x = assemble_input(&b, &proj).unwrap();
        assert_eq!(x.slice_cols(0, 4).unwrap().values(), proj.project(&b.prompt_halves().unwrap()).unwrap().values());
        assert_eq!(x.slice_cols(4, 7).unwrap().values(), b.lyrics.values());
        assert_eq!(x.slice_cols(7, 9).unwrap().values(), b.audio.values());
        assert_eq!(x.slice_cols(9, 11).unwrap().values(), b.time.values());
    }

    #[test]
    fn mismatched_frames_are_a_dimension_error() {
        let dims = small_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let proj = TextProjection::new(5, 4, 4, &mut rng);
        let mut b = ConditioningBundle::zeros(6, &dims);
        b.lyrics = Tensor::zeros(&[5, 3]);
        assert!(matches!(assemble_input(&b, &proj), Err(Error::Tensor(TensorError::Shape(_)))));
    }

    #[test]
    fn certain_and_impossible_dropout() {
        let dims = small_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = filled(4, &dims, &mut rng);
        let same = apply_condition_dropout(b.clone(), &DropoutRates::none(), &mut rng).unwrap();
        assert_eq!(same, b);
        let gone = apply_condition_dropout(b.clone(), &DropoutRates::new(1.0, 0.0), &mut rng).unwrap();
        assert!(gone.drop_global && !gone.drop_segment);
        assert!(gone.global.values().iter().all(|&v| v == 0.0));
        assert_eq!(gone.segment, b.segment);
        assert!(apply_condition_dropout(b, &DropoutRates::new(1.5, 0.0), &mut rng).is_err());
    }

    #[test]
    fn dropout_rates_and_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rates = DropoutRates::new(0.2, 0.2);
        let n = 10_000;
        let draws: Vec<DropoutDraw> = (0..n).map(|_| DropoutDraw::sample(&rates, &mut rng)).collect();
        let g: Vec<f64> = draws.iter().map(|d| d.global as u8 as f64).collect();
        let s: Vec<f64> = draws.iter().map(|d| d.segment as u8 as f64).collect();
        let (mg, ms) = (g.iter().sum::<f64>() / n as f64, s.iter().sum::<f64>() / n as f64);
        assert!((0.18..=0.22).contains(&mg), "global rate {mg}");
        assert!((0.18..=0.22).contains(&ms), "segment rate {ms}");
        let cov = g.iter().zip(&s).map(|(a, b)| (a - mg) * (b - ms)).sum::<f64>() / n as f64;
        let corr = cov / (mg * (1.0 - mg) * ms * (1.0 - ms)).sqrt();
        assert!(corr.abs() < 0.05, "corr {corr}");
    }

    #[test]
    fn conditioner_checks_embedder_widths() {
        let dims = small_dims();
        let rate = FrameRate::new(10.0).unwrap();
        let bad = Conditioner::new(
            Box::new(stub_embedder("g", 4).unwrap()),
            Box::new(stub_embedder("s", 2).unwrap()),
            Box::new(stub_embedder("l", 3).unwrap()),
            rate,
            dims,
        );
        assert!(bad.is_err());
        let c = Conditioner::stub(dims, rate).unwrap();
        let spec = PromptSpec::new("g", vec![SegmentSpec::new(0.0, 0.3, "s", SegmentKind::Lyric)]).unwrap();
        let doc = LrcDocument::new(vec![LrcLine::new(0.1, "la la")], 1.0).unwrap();
        let (b, truncated) = c.encode(&spec, &doc, 8).unwrap();
        assert_eq!(truncated, 0);
        assert_eq!(b.lyrics.row(2), c.lyric_embedder().embed("la").as_slice());
        assert!(b.audio.values().iter().all(|&v| v == 0.0));
        let u = c.unconditional(8);
        assert!(u.global.values().iter().chain(u.lyrics.values()).all(|&v| v == 0.0));
    }

    /// Reference: decide every frame's segment by membership and project its row alone.
    fn brute_force(spec: &PromptSpec, c: &Conditioner, proj: &TextProjection, frames: usize) -> Tensor {
        let rate = c.rate().hz();
        let g = c.global_embedder().embed(&spec.global);
        let rows: Vec<Vec<f64>> = (0..frames)
            .map(|f| {
                let mut seg = vec![0.0; c.dims().d_segment];
                for s in &spec.segments {
                    let a = (s.start * rate + 1e-9).floor() as usize;
                    let b = (s.end * rate + 1e-9).floor() as usize;
                    if a <= f && f < b {
                        seg = c.segment_embedder().embed(&s.text);
                    }
                }
                let row: Vec<f64> = g.iter().chain(&seg).copied().collect();
                proj.project(&Tensor::from_rows(&[row]).unwrap()).unwrap().into_values()
            })
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn encode_prompts_matches_per_frame_reference(
            frames in 1usize..256,
            cuts in prop::collection::vec((0usize..256, 0usize..256, 0u8..6), 0..8),
            seed in any::<u64>(),
        ) {
            let dims = small_dims();
            let rate = FrameRate::new(10.0).unwrap();
            let c = Conditioner::stub(dims, rate).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let proj = TextProjection::new(5, 4, 4, &mut rng);
            let mut spans: Vec<(usize, usize, u8)> = cuts
                .into_iter()
                .map(|(a, b, k)| (a.min(b) % frames, (a.max(b) % frames) + 1, k))
                .collect();
            spans.sort();
            let mut segments = Vec::new();
            let mut prev = 0;
            for (a, b, k) in spans {
                if a >= prev && a < b {
                    segments.push(SegmentSpec::new(a as f64 / 10.0, b as f64 / 10.0, format!("s{k}"), SegmentKind::Lyric));
                    prev = b;
                }
            }
            let spec = PromptSpec::new("song", segments).unwrap();
            let fast = crate::conditioning::encode_prompts(
                &spec, frames, c.global_embedder(), c.segment_embedder(), &proj, rate,
            ).unwrap();
            prop_assert_eq!(fast, brute_force(&spec, &c, &proj, frames));
        }
    }
}
