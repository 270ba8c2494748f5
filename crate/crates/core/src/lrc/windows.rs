//! Segment windows from sentence-level timestamps.
//!
//! Lyric segments start at the frame of their first line. A lyric segment runs
//! up to the next lyric segment when the two are adjacent, or to the end of
//! the song when it is last. When instrumental segments follow, the lyric
//! segment ends after its last line's estimated singing time and the
//! instrumental segments split the remaining gap evenly. Leading instrumental
//! segments split the span before the first lyric. The windows always
//! partition `[0, T)`.

use serde::{Deserialize, Serialize};

use super::{DurationHeuristic, FrameRate, LrcDocument, LrcError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Lyric,
    Instrumental,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowProvenance {
    LyricDerived,
    InstrumentalInferred,
    Boundary,
}

/// Half-open frame range `[frame_start, frame_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentWindow {
    pub frame_start: usize,
    pub frame_end: usize,
    pub provenance: WindowProvenance,
}

impl SegmentWindow {
    pub fn len(&self) -> usize {
        self.frame_end - self.frame_start
    }

    pub fn is_empty(&self) -> bool {
        self.frame_end <= self.frame_start
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.frame_start..self.frame_end).contains(&frame)
    }
}

/// One entry of a song structure: a labeled segment and, for lyric segments,
/// the half-open range of lyric line indices it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureEntry {
    pub kind: SegmentKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines: Option<[usize; 2]>,
}

impl StructureEntry {
    pub fn lyric(label: impl Into<String>, start: usize, end: usize) -> Self {
        Self { kind: SegmentKind::Lyric, label: label.into(), lines: Some([start, end]) }
    }

    pub fn instrumental(label: impl Into<String>) -> Self {
        Self { kind: SegmentKind::Instrumental, label: label.into(), lines: None }
    }

    fn line_range(&self) -> Option<(usize, usize)> {
        self.lines.map(|[a, b]| (a, b)).filter(|(a, b)| b > a)
    }
}

fn validate_structure(doc: &LrcDocument, structure: &[StructureEntry]) -> Result<(), LrcError> {
    if structure.is_empty() {
        return Err(LrcError::Validation("empty structure".into()));
    }
    let mut next_line = 0;
    for (i, entry) in structure.iter().enumerate() {
        match (entry.kind, entry.line_range()) {
            (SegmentKind::Lyric, Some((a, b))) => {
                if a != next_line {
                    return Err(LrcError::Validation(format!(
                        "segment {i} ({}) starts at line {a}, expected {next_line}",
                        entry.label
                    )));
                }
                next_line = b;
            }
            (SegmentKind::Lyric, None) => {
                return Err(LrcError::Validation(format!("lyric segment {i} ({}) owns no lines", entry.label)));
            }
            (_, Some(_)) => {
                return Err(LrcError::Validation(format!(
                    "instrumental segment {i} ({}) owns lyric lines",
                    entry.label
                )));
            }
            (_, None) => {}
        }
    }
    if next_line != doc.len() {
        return Err(LrcError::Validation(format!(
            "structure covers {next_line} lyric lines, document has {}",
            doc.len()
        )));
    }
    Ok(())
}

/// Splits `[a, b)` into `k` consecutive non-empty windows.
fn split_even(a: usize, b: usize, k: usize, out: &mut [Option<(usize, usize)>], slots: &[usize]) -> Result<(), LrcError> {
    if b < a + k {
        return Err(LrcError::Validation(format!(
            "{k} instrumental segment(s) do not fit in frames {a}..{b}"
        )));
    }
    for (j, &slot) in slots.iter().enumerate() {
        let s = a + j * (b - a) / k;
        let e = a + (j + 1) * (b - a) / k;
        out[slot] = Some((s, e));
    }
    Ok(())
}

/// Derives one window per structure entry, partitioning `[0, total_frames)`.
pub fn derive_windows(
    doc: &LrcDocument,
    structure: &[StructureEntry],
    rate: FrameRate,
    total_frames: usize,
) -> Result<Vec<SegmentWindow>, LrcError> {
    validate_structure(doc, structure)?;
    if total_frames == 0 {
        return Err(LrcError::Validation("song has zero frames".into()));
    }
    let heuristic = DurationHeuristic::default();
    let lines = doc.lines();
    let n = structure.len();

    // Start frame of each lyric entry; the first entry of the song always starts at 0.
    let mut lyric_start = vec![None; n];
    for (i, entry) in structure.iter().enumerate() {
        if let Some((a, _)) = entry.line_range() {
            let f = if i == 0 { 0 } else { rate.frame(lines[a].timestamp)? };
            if f >= total_frames {
                return Err(LrcError::Validation(format!(
                    "segment {i} ({}) starts at frame {f}, past the end ({total_frames})",
                    entry.label
                )));
            }
            lyric_start[i] = Some(f);
        }
    }

    let mut spans: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut i = 0;
    while i < n {
        if let Some(start) = lyric_start[i] {
            // Count the instrumental run that follows, then find where it ends.
            let mut j = i + 1;
            while j < n && lyric_start[j].is_none() {
                j += 1;
            }
            let run = j - i - 1;
            let limit = if j < n { lyric_start[j].expect("lyric") } else { total_frames };
            let end = if run == 0 {
                limit
            } else {
                let (_, b) = structure[i].line_range().expect("lyric");
                let last = &lines[b - 1];
                let last_frame = rate.frame(last.timestamp)?;
                let sung = heuristic.line_seconds(&last.text, structure[i].label.to_lowercase().contains("chorus"));
                let natural = rate.frame(last.timestamp + sung)?;
                let hi = limit.saturating_sub(run);
                let lo = (last_frame + 1).max(start + 1);
                if hi < lo {
                    return Err(LrcError::Validation(format!(
                        "no room for {run} instrumental segment(s) after segment {i} ({})",
                        structure[i].label
                    )));
                }
                natural.clamp(lo, hi)
            };
            if end <= start {
                return Err(LrcError::Validation(format!(
                    "segment {i} ({}) has an empty window at frame {start}",
                    structure[i].label
                )));
            }
            spans[i] = Some((start, end));
            if run > 0 {
                let slots: Vec<usize> = (i + 1..j).collect();
                split_even(end, limit, run, &mut spans, &slots)?;
            }
            i = j;
        } else {
            // Leading instrumental run before the first lyric segment (or the whole song).
            let mut j = i;
            while j < n && lyric_start[j].is_none() {
                j += 1;
            }
            let limit = if j < n { lyric_start[j].expect("lyric") } else { total_frames };
            let slots: Vec<usize> = (i..j).collect();
            split_even(0, limit, j - i, &mut spans, &slots)?;
            i = j;
        }
    }

    Ok(structure
        .iter()
        .zip(spans)
        .map(|(entry, span)| {
            let (frame_start, frame_end) = span.expect("every entry assigned");
            let provenance = match entry.kind {
                SegmentKind::Lyric => WindowProvenance::LyricDerived,
                SegmentKind::Instrumental => WindowProvenance::InstrumentalInferred,
                SegmentKind::Boundary => WindowProvenance::Boundary,
            };
            SegmentWindow { frame_start, frame_end, provenance }
        })
        .collect())
}
