//! Rule-based stand-in for a learned sentence-level duration predictor.
//!
//! Each lyric line lasts `base + per_syllable · syllables` seconds, chorus
//! lines are stretched by `chorus_factor`, and a fixed instrumental gap
//! precedes every lyric section, follows the last line, and stands in for each
//! lyric-free section.

use serde::{Deserialize, Serialize};

use super::{LrcDocument, LrcError, LrcLine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DurationHeuristic {
    pub base_seconds: f64,
    pub per_syllable_seconds: f64,
    pub chorus_factor: f64,
    pub gap_seconds: f64,
}

impl Default for DurationHeuristic {
    fn default() -> Self {
        Self { base_seconds: 0.4, per_syllable_seconds: 0.35, chorus_factor: 1.1, gap_seconds: 2.0 }
    }
}

/// A block of lyrics under one segment prompt. No lines means an instrumental section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyricSection {
    pub prompt: String,
    #[serde(default)]
    pub lines: Vec<String>,
}

impl LyricSection {
    pub fn is_chorus(&self) -> bool {
        self.prompt.to_lowercase().contains("chorus")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationRequest {
    pub global_prompt: String,
    pub sections: Vec<LyricSection>,
    #[serde(default)]
    pub total_duration_hint: Option<f64>,
}

impl DurationRequest {
    /// Reads an interleaved lyric sheet: a `[bracketed]` line opens a section
    /// whose prompt is the bracket content; other non-blank lines are lyrics.
    /// Lyrics before the first bracket form an untitled section.
    pub fn from_lyric_sheet(global_prompt: impl Into<String>, sheet: &str, hint: Option<f64>) -> Self {
        let mut sections: Vec<LyricSection> = Vec::new();
        for line in sheet.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(prompt) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push(LyricSection { prompt: prompt.trim().to_string(), lines: vec![] });
            } else {
                if sections.is_empty() {
                    sections.push(LyricSection { prompt: String::new(), lines: vec![] });
                }
                sections.last_mut().expect("non-empty").lines.push(line.to_string());
            }
        }
        Self { global_prompt: global_prompt.into(), sections, total_duration_hint: hint }
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

fn is_vowel(c: char) -> bool {
    "aeiouyàáâãäåèéêëìíîïòóôõöùúûüýÿæœ".contains(c)
}

/// Approximate syllable count: one per CJK character, and for every other
/// word the number of maximal vowel groups (at least one per word).
pub fn syllable_count(text: &str) -> usize {
    let mut total = 0;
    for word in text.split_whitespace() {
        let mut latin_letters = false;
        let mut groups = 0;
        let mut in_vowel = false;
        for c in word.chars().flat_map(char::to_lowercase) {
            if is_cjk(c) {
                total += 1;
                in_vowel = false;
            } else if c.is_alphanumeric() {
                latin_letters = true;
                let v = is_vowel(c);
                if v && !in_vowel {
                    groups += 1;
                }
                in_vowel = v;
            } else {
                in_vowel = false;
            }
        }
        if latin_letters {
            total += groups.max(1);
        }
    }
    total
}

impl DurationHeuristic {
    pub fn line_seconds(&self, text: &str, chorus: bool) -> f64 {
        let d = self.base_seconds + self.per_syllable_seconds * syllable_count(text) as f64;
        if chorus {
            d * self.chorus_factor
        } else {
            d
        }
    }

    /// Onsets and song length before any rescaling.
    fn unscaled(&self, sections: &[LyricSection]) -> (Vec<LrcLine>, f64) {
        let mut cursor = 0.0;
        let mut lines = Vec::new();
        for section in sections {
            cursor += self.gap_seconds;
            for text in &section.lines {
                lines.push(LrcLine::new(cursor, text.clone()));
                cursor += self.line_seconds(text, section.is_chorus());
            }
        }
        (lines, cursor + self.gap_seconds)
    }
}

/// Predicts an LRC document for `request`; with a hint, all timestamps are scaled
/// so the song lasts exactly `total_duration_hint` seconds.
pub fn predict_durations(request: &DurationRequest, heuristic: &DurationHeuristic) -> Result<LrcDocument, LrcError> {
    if request.sections.iter().all(|s| s.lines.is_empty()) {
        return Err(LrcError::Contract("no lyric lines to time".into()));
    }
    if let Some(line) = request.sections.iter().flat_map(|s| &s.lines).find(|l| l.contains(['\n', '\r'])) {
        return Err(LrcError::Contract(format!("lyric line {line:?} contains a newline")));
    }
    let (mut lines, total) = heuristic.unscaled(&request.sections);
    match request.total_duration_hint {
        None => LrcDocument::new(lines, total),
        Some(hint) if hint.is_finite() && hint > 0.0 => {
            let scale = hint / total;
            for line in &mut lines {
                line.timestamp *= scale;
            }
            LrcDocument::new(lines, hint)
        }
        Some(hint) => Err(LrcError::Contract(format!("duration hint {hint} must be positive"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn request(sections: Vec<(&str, Vec<&str>)>, hint: Option<f64>) -> DurationRequest {
        DurationRequest {
            global_prompt: "pop".into(),
            sections: sections
                .into_iter()
                .map(|(p, l)| LyricSection { prompt: p.into(), lines: l.into_iter().map(String::from).collect() })
                .collect(),
            total_duration_hint: hint,
        }
    }

    #[test]
    fn syllables() {
        assert_eq!(syllable_count("hello world"), 3);
        assert_eq!(syllable_count("happy"), 2); // y counts as a vowel
        assert_eq!(syllable_count("psst"), 1);
        assert_eq!(syllable_count("你好 world"), 3);
        assert_eq!(syllable_count(""), 0);
        assert_eq!(syllable_count("..."), 0);
    }

    #[test]
    fn single_line_with_hint() {
        let h = DurationHeuristic::default();
        let doc = predict_durations(&request(vec![("verse", vec!["hello"])], Some(10.0)), &h).unwrap();
        assert_eq!(doc.total_duration(), 10.0);
        assert_eq!(doc.len(), 1);
        let unscaled = predict_durations(&request(vec![("verse", vec!["hello"])], None), &h).unwrap();
        assert_eq!(unscaled.lines()[0].timestamp, h.gap_seconds);
        let scale = 10.0 / unscaled.total_duration();
        assert_eq!(doc.lines()[0].timestamp, h.gap_seconds * scale);
    }

    #[test]
    fn hint_twice_the_natural_length_doubles_every_timestamp() {
        let h = DurationHeuristic::default();
        let sections = vec![("intro", vec![]), ("verse", vec!["a b c", "de fg"]), ("chorus", vec!["la la la"])];
        let natural = predict_durations(&request(sections.clone(), None), &h).unwrap();
        let doubled =
            predict_durations(&request(sections, Some(2.0 * natural.total_duration())), &h).unwrap();
        for (a, b) in natural.lines().iter().zip(doubled.lines()) {
            assert_eq!(b.timestamp, 2.0 * a.timestamp);
        }
    }

    #[test]
    fn chorus_lines_are_slower() {
        let h = DurationHeuristic::default();
        let v = h.line_seconds("one more time", false);
        let c = h.line_seconds("one more time", true);
        assert!((c - 1.1 * v).abs() < 1e-12);
    }

    #[test]
    fn doubling_lines_lengthens_every_line() {
        let h = DurationHeuristic::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz 你好世界".chars().collect();
        for _ in 0..200 {
            let len = rng.random_range(1..20);
            let line: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            if line.trim().is_empty() {
                continue;
            }
            let doubled = format!("{line} {line}");
            let chorus = rng.random_bool(0.5);
            assert!(h.line_seconds(&doubled, chorus) > h.line_seconds(&line, chorus), "{line:?}");
        }
    }

    #[test]
    fn output_always_validates() {
        let h = DurationHeuristic::default();
        let sheet = "[intro]\n[verse one]\nfirst line\nsecond line\n[chorus]\n你好世界\n[outro]";
        let req = DurationRequest::from_lyric_sheet("ballad", sheet, None);
        assert_eq!(req.sections.len(), 4);
        assert!(req.sections[2].is_chorus());
        let doc = predict_durations(&req, &h).unwrap();
        let again = super::super::parse_lrc(&super::super::serialize_lrc(&doc)).unwrap();
        assert_eq!(again.len(), 3);
    }

    #[test]
    fn empty_lyrics_are_rejected() {
        let h = DurationHeuristic::default();
        assert!(matches!(
            predict_durations(&request(vec![("intro", vec![])], None), &h),
            Err(LrcError::Contract(_))
        ));
    }
}
