//! LRC lyric documents, timestamp-to-frame conversion, segment windows, and a
//! heuristic duration predictor.

mod durations;
mod frames;
mod parse;
mod windows;

pub use durations::{predict_durations, syllable_count, DurationHeuristic, DurationRequest, LyricSection};
pub use frames::{frame_to_time, frames_for_duration, time_to_frame, FrameRate};
pub use parse::{parse_lrc, serialize_lrc};
pub use windows::{derive_windows, SegmentKind, SegmentWindow, StructureEntry, WindowProvenance};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LrcError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid lyric document: {0}")]
    Validation(String),
    #[error("contract violated: {0}")]
    Contract(String),
}

/// One timestamped lyric line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrcLine {
    pub timestamp: f64,
    pub text: String,
}

impl LrcLine {
    pub fn new(timestamp: f64, text: impl Into<String>) -> Self {
        Self { timestamp, text: text.into() }
    }
}

/// Ordered lyric lines with sentence-level onsets.
///
/// Timestamps are non-decreasing and all strictly below `total_duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrcDocument {
    lines: Vec<LrcLine>,
    total_duration: f64,
}

impl LrcDocument {
    pub fn new(lines: Vec<LrcLine>, total_duration: f64) -> Result<Self, LrcError> {
        if !(total_duration.is_finite() && total_duration > 0.0) {
            return Err(LrcError::Validation(format!("total duration {total_duration} must be positive")));
        }
        let mut prev = 0.0;
        for (i, line) in lines.iter().enumerate() {
            if !(line.timestamp.is_finite() && line.timestamp >= 0.0) {
                return Err(LrcError::Validation(format!("line {i}: bad timestamp {}", line.timestamp)));
            }
            if line.timestamp < prev {
                return Err(LrcError::Validation(format!(
                    "line {i}: timestamp {} precedes {prev}",
                    line.timestamp
                )));
            }
            if line.timestamp >= total_duration {
                return Err(LrcError::Validation(format!(
                    "line {i}: timestamp {} not before end of song at {total_duration}",
                    line.timestamp
                )));
            }
            if line.text.contains(['\n', '\r']) {
                return Err(LrcError::Validation(format!("line {i}: text contains a newline")));
            }
            prev = line.timestamp;
        }
        Ok(Self { lines, total_duration })
    }

    pub fn empty(total_duration: f64) -> Result<Self, LrcError> {
        Self::new(vec![], total_duration)
    }

    pub fn lines(&self) -> &[LrcLine] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn with_total_duration(self, total_duration: f64) -> Result<Self, LrcError> {
        Self::new(self.lines, total_duration)
    }

    /// Copy with every timestamp moved by `offset` seconds (and the end extended to fit).
    pub fn shifted(&self, offset: f64) -> Result<Self, LrcError> {
        let lines = self.lines.iter().map(|l| LrcLine::new(l.timestamp + offset, l.text.clone())).collect();
        Self::new(lines, (self.total_duration + offset.max(0.0)).max(f64::MIN_POSITIVE))
    }
}
