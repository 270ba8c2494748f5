//! A controllable toy latent distribution: a global offset per song plus a
//! periodic pattern per segment, phase-anchored at each segment's first frame.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditioning::{PromptSpec, SegmentSpec};
use crate::flow::TrainExample;
use crate::lrc::{frame_to_time, FrameRate, LrcDocument, LrcLine, SegmentKind};
use crate::numeric::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalEntry {
    pub text: String,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub text: String,
    pub amplitude: f64,
    pub period: usize,
}

impl PatternEntry {
    /// Pattern value `k` frames into its window.
    pub fn value(&self, k: usize) -> f64 {
        self.amplitude * (2.0 * PI * (k % self.period) as f64 / self.period as f64).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub frames: usize,
    pub d_audio: usize,
    pub frame_rate: f64,
    pub sigma: f64,
    pub globals: Vec<GlobalEntry>,
    pub patterns: Vec<PatternEntry>,
    /// Shortest generated segment, in frames.
    pub min_segment: usize,
    /// Syllables cycled through the lyric line of each segment.
    pub syllables: Vec<String>,
}

impl SyntheticTaskSpec {
    /// 64 frames of 8 channels at 21.5 Hz, three songs styles and three patterns of period 2, 4 and 8.
    pub fn standard(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_audio = 8;
        let globals = ["warm acoustic ballad", "energetic electronic dance", "dark cinematic score"]
            .iter()
            .map(|text| GlobalEntry {
                text: text.to_string(),
                offset: (0..d_audio).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect(),
            })
            .collect();
        let patterns = [("fast shimmering hi-hats", 2), ("steady pulsing bass", 4), ("slow swelling strings", 8)]
            .iter()
            .map(|&(text, period)| PatternEntry { text: text.to_string(), amplitude: 1.0, period })
            .collect();
        let syllables = ["la", "na", "da", "ma", "ka", "ta", "sa", "ra"].iter().map(|s| s.to_string()).collect();
        Self { frames: 64, d_audio, frame_rate: FrameRate::SONG_LATENT.hz(), sigma: 0.05, globals, patterns, min_segment: 12, syllables }
    }

    pub fn validate(&self) -> Result<()> {
        if self.globals.is_empty() || self.patterns.is_empty() {
            return Err(Error::Contract("vocabularies must be non-empty".into()));
        }
        if self.patterns.iter().any(|p| p.period < 2) {
            return Err(Error::Contract("pattern periods must be at least 2 frames".into()));
        }
        if self.globals.iter().any(|g| g.offset.len() != self.d_audio) {
            return Err(Error::Contract("global offsets must have d_audio entries".into()));
        }
        if !(self.sigma >= 0.0) || self.frames == 0 || self.syllables.is_empty() {
            return Err(Error::Contract("bad synthetic task sizes".into()));
        }
        Ok(())
    }

    pub fn rate(&self) -> Result<FrameRate> {
        Ok(FrameRate::new(self.frame_rate)?)
    }

    pub fn global(&self, text: &str) -> Result<&GlobalEntry> {
        self.globals
            .iter()
            .find(|g| g.text == text)
            .ok_or_else(|| Error::Contract(format!("global text {text:?} is not in the vocabulary")))
    }

    pub fn pattern(&self, text: &str) -> Result<&PatternEntry> {
        self.patterns
            .iter()
            .find(|p| p.text == text)
            .ok_or_else(|| Error::Contract(format!("segment text {text:?} is not in the vocabulary")))
    }

    /// Length of the song in seconds, rounded up to a centisecond.
    pub fn duration(&self) -> f64 {
        (self.frames as f64 / self.frame_rate * 100.0).ceil() / 100.0
    }

    /// A segment over frames `[a, b)` expressed in whole centiseconds.
    pub fn segment(&self, a: usize, b: usize, text: &str) -> Result<SegmentSpec> {
        let rate = self.rate()?;
        Ok(SegmentSpec::new(frame_to_time(a, rate), frame_to_time(b, rate), text, SegmentKind::Lyric))
    }

    /// A random prompt with 2–4 segments that tile all frames.
    pub fn random_prompt(&self, rng: &mut impl Rng) -> Result<PromptSpec> {
        let max_segments = (self.frames / self.min_segment.max(1)).clamp(1, 4);
        let n = rng.random_range(2.min(max_segments)..=max_segments);
        let slack = self.frames - n * self.min_segment;
        let mut cuts: Vec<usize> = (0..n - 1).map(|_| rng.random_range(0..=slack)).collect();
        cuts.sort_unstable();
        let mut bounds = vec![0];
        for (i, c) in cuts.iter().enumerate() {
            bounds.push(c + (i + 1) * self.min_segment);
        }
        bounds.push(self.frames);
        let global = self.globals.choose(rng).map(|g| g.text.clone()).unwrap_or_default();
        let segments = bounds
            .windows(2)
            .map(|w| {
                let text = &self.patterns.choose(rng).expect("non-empty vocabulary").text;
                self.segment(w[0], w[1], text)
            })
            .collect::<Result<Vec<_>>>()?;
        PromptSpec::new(global, segments)
    }

    /// One lyric line per segment, its syllables cycling one per frame of the window.
    pub fn lyrics_for(&self, spec: &PromptSpec) -> Result<LrcDocument> {
        let rate = self.rate()?;
        let windows = spec.frame_windows(rate, self.frames)?;
        let lines = spec
            .segments
            .iter()
            .zip(&windows)
            .filter(|(_, (a, b))| b > a)
            .map(|(s, (a, b))| {
                let text: Vec<&str> = (0..b - a).map(|k| self.syllables[k % self.syllables.len()].as_str()).collect();
                LrcLine::new(s.start, text.join(" "))
            })
            .collect();
        Ok(LrcDocument::new(lines, self.duration())?)
    }

    /// Offset plus phase-anchored patterns plus `N(0, σ²)` noise.
    pub fn synth_sample(&self, spec: &PromptSpec, rng: &mut impl Rng) -> Result<Tensor> {
        let offset = &self.global(&spec.global)?.offset;
        let windows = spec.frame_windows(self.rate()?, self.frames)?;
        let mut x = Tensor::repeat_row(offset, self.frames);
        for (s, (a, b)) in spec.segments.iter().zip(windows) {
            let p = self.pattern(&s.text)?;
            for f in a..b {
                let v = p.value(f - a);
                x.row_mut(f).iter_mut().for_each(|c| *c += v);
            }
        }
        if self.sigma > 0.0 {
            for v in x.values_mut() {
                *v += self.sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(x)
    }

    /// `n` random prompts with their lyrics and sampled latents.
    pub fn dataset(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<TrainExample>> {
        self.validate()?;
        (0..n)
            .map(|_| {
                let spec = self.random_prompt(rng)?;
                let doc = self.lyrics_for(&spec)?;
                let x1 = self.synth_sample(&spec, rng)?;
                Ok(TrainExample { x1, spec, doc })
            })
            .collect()
    }
}
