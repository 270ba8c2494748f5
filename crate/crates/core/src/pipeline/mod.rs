//! Manifest-level data preparation: stage filters, caption assembly, boundary
//! prompts, preference pair selection and the duration-prediction dataset.
//!
//! A manifest is JSON lines, one [`Record`] per line:
//!
//! ```json
//! {"id": "song-001", "duration": 184.2, "sampling_rate": 44100, "channels": 2,
//!  "compression_ok": true, "energy_ok": true,
//!  "quality_scores": {"aesthetic": 7.2, "coherence": 3.9},
//!  "lyrics": {"lrc": "[00:12.40] first line\n[00:15.10] second line\n"},
//!  "transcript": ["first line", "second line"],
//!  "segments": [{"kind": "instrumental", "label": "intro"},
//!               {"kind": "lyric", "label": "verse", "lines": [0, 2]}],
//!  "captions": {"global": "bright indie pop", "0": "soft guitar", "1": "warm vocals"}}
//! ```
//!
//! `lyrics` may instead be `{"plain": ["line", ...]}`. `captions` maps
//! `"global"` or a segment index to its description.

mod dataset;
mod dpo;
mod filters;
mod prompts;

pub use dataset::{build_duration_dataset, render_instruction, DurationDataset, DurationExample};
pub use dpo::dpo_pair_select;
pub use filters::{
    finetune_filter, levenshtein, lyric_edit_filter, normalized_edit_distance, pretrain_filter, FinetuneConfig,
    PretrainConfig,
};
pub use prompts::{assemble_segment_caption, insert_boundary_prompts, BOUNDARY_END_TEXT, BOUNDARY_START_TEXT};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lrc::{parse_lrc, LrcDocument, StructureEntry};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lyrics {
    Lrc(String),
    Plain(Vec<String>),
}

impl Lyrics {
    pub fn lines(&self) -> Result<Vec<String>> {
        match self {
            Lyrics::Lrc(text) => Ok(parse_lrc(text)?.lines().iter().map(|l| l.text.clone()).collect()),
            Lyrics::Plain(lines) => Ok(lines.clone()),
        }
    }

    /// The timed document, when the lyrics carry timestamps.
    pub fn document(&self) -> Option<Result<LrcDocument>> {
        match self {
            Lyrics::Lrc(text) => Some(parse_lrc(text).map_err(Error::from)),
            Lyrics::Plain(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub duration: f64,
    pub sampling_rate: f64,
    pub channels: u32,
    #[serde(default = "yes")]
    pub compression_ok: bool,
    #[serde(default = "yes")]
    pub energy_ok: bool,
    #[serde(default)]
    pub quality_scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyrics: Option<Lyrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Vec<String>>,
    #[serde(default)]
    pub segments: Vec<StructureEntry>,
    #[serde(default)]
    pub captions: BTreeMap<String, String>,
}

fn yes() -> bool {
    true
}

impl Record {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Data(format!("{}: duration must be positive", self.id)));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return Err(Error::Data(format!("{}: sampling rate must be positive", self.id)));
        }
        if self.channels == 0 {
            return Err(Error::Data(format!("{}: needs at least one channel", self.id)));
        }
        if self.quality_scores.values().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{}: non-finite quality score", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub id: String,
    pub flag: String,
}

/// Outcome of a filter: every input id lands in exactly one of `kept` and `rejected`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<String>,
    pub rejected: Vec<Rejection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

impl FilterReport {
    pub fn reject(&mut self, id: &str, reason: &str) {
        self.rejected.push(Rejection { id: id.to_string(), reason: reason.to_string() });
    }

    pub fn reason_of(&self, id: &str) -> Option<&str> {
        self.rejected.iter().find(|r| r.id == id).map(|r| r.reason.as_str())
    }
}

/// Value at fraction `q` of the sorted sample, interpolating linearly between
/// neighbours (position `q·(n − 1)`).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Contract("percentile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Contract(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Records that parsed, and `(line id, reason)` for those that did not.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<Record>,
    pub invalid: Vec<Rejection>,
}

impl Manifest {
    /// Parses JSON lines; blank lines are skipped, malformed ones land in `invalid`.
    pub fn parse(text: &str) -> Self {
        let mut out = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(e) => {
                    out.invalid.push(Rejection { id: format!("line {}", i + 1), reason: format!("schema: {e}") });
                    continue;
                }
            };
            let id = value.get("id").and_then(|v| v.as_str()).map(str::to_string).unwrap_or(format!("line {}", i + 1));
            match serde_json::from_value::<Record>(value).map_err(Error::from).and_then(|r| r.validate().map(|_| r)) {
                Ok(r) => out.records.push(r),
                Err(e) => out.invalid.push(Rejection { id, reason: format!("schema: {e}") }),
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentile_uses_linear_interpolation() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.75).unwrap(), 3.25);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 2.5);
        assert_eq!(percentile(&[7.0], 0.3).unwrap(), 7.0);
        assert!(percentile(&[], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn percentile_matches_sorted_reference(values in prop::collection::vec(-100.0f64..100.0, 1..60), q in 0.0f64..=1.0) {
            let mut s = values.clone();
            s.sort_by(f64::total_cmp);
            let pos = q * (s.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            let expected = if i + 1 < s.len() { s[i] * (1.0 - frac) + s[i + 1] * frac } else { s[i] };
            let got = percentile(&values, q).unwrap();
            prop_assert!((got - expected).abs() < 1e-9);
            prop_assert!(got >= s[0] && got <= s[s.len() - 1]);
        }
    }

    #[test]
    fn manifest_parsing_separates_bad_lines() {
        let text = concat!(
            r#"{"id":"a","duration":60,"sampling_rate":44100,"channels":2,"quality_scores":{"q":1},"lyrics":{"plain":["x"]}}"#,
            "\n\n",
            "not json\n",
            r#"{"id":"b","duration":-1,"sampling_rate":44100,"channels":2}"#,
            "\n",
            r#"{"id":"c","duration":60,"sampling_rate":44100}"#,
            "\n",
            r#"{"id":"d","duration":60,"sampling_rate":44100,"channels":1,"lyrics":{"lrc":"[00:01.00] hi\n"}}"#,
        );
        let m = Manifest::parse(text);
        assert_eq!(m.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), vec!["a", "d"]);
        assert_eq!(m.invalid.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), vec!["line 3", "b", "c"]);
        assert!(m.records[1].compression_ok);
        assert_eq!(m.records[1].lyrics.as_ref().unwrap().lines().unwrap(), vec!["hi"]);
        assert!(Manifest::parse("").records.is_empty());
    }
}
