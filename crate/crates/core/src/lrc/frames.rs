use serde::{Deserialize, Serialize};

use super::LrcError;

/// Slack, in frames, absorbed when flooring `t · rate`.
///
/// Timestamps arrive as decimal centiseconds; without this, a time that sits
/// exactly on a frame boundary can land one frame early after binary rounding.
const FRAME_SLACK: f64 = 1e-9;

/// Latent frames per second (`sampling_rate / downsample`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameRate(f64);

impl FrameRate {
    /// 44.1 kHz audio compressed to a 21.5 Hz latent.
    pub const SONG_LATENT: FrameRate = FrameRate(21.5);

    pub fn new(hz: f64) -> Result<Self, LrcError> {
        if hz.is_finite() && hz > 0.0 {
            Ok(Self(hz))
        } else {
            Err(LrcError::Contract(format!("frame rate {hz} must be positive")))
        }
    }

    pub fn from_sampling(sampling_rate: f64, downsample: f64) -> Result<Self, LrcError> {
        if !(sampling_rate > 0.0 && downsample > 0.0) {
            return Err(LrcError::Contract("sampling and downsample rates must be positive".into()));
        }
        Self::new(sampling_rate / downsample)
    }

    pub fn hz(self) -> f64 {
        self.0
    }

    pub fn frame(self, t: f64) -> Result<usize, LrcError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(LrcError::Contract(format!("time {t} must be non-negative")));
        }
        Ok((t * self.0 + FRAME_SLACK).floor() as usize)
    }
}

/// `⌊t · r / r_d⌋`.
pub fn time_to_frame(t: f64, sampling_rate: f64, downsample: f64) -> Result<usize, LrcError> {
    FrameRate::from_sampling(sampling_rate, downsample)?.frame(t)
}

/// Number of latent frames covering `duration` seconds: `⌈duration · rate⌉`.
pub fn frames_for_duration(duration: f64, rate: FrameRate) -> usize {
    (duration * rate.hz() - FRAME_SLACK).ceil().max(0.0) as usize
}

/// Smallest whole-centisecond time that maps to `frame`.
pub fn frame_to_time(frame: usize, rate: FrameRate) -> f64 {
    if frame == 0 {
        return 0.0;
    }
    (frame as f64 / rate.hz() * 100.0 - FRAME_SLACK).ceil() / 100.0
}
