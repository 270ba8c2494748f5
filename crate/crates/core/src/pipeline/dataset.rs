use serde::{Deserialize, Serialize};

use super::{Record, Rejection, BOUNDARY_END_TEXT, BOUNDARY_START_TEXT};
use crate::lrc::{serialize_lrc, LrcDocument};
use crate::Result;

const HEADER: &str = "\
You are a professional music composer and vocal arranger.

Your task:

1. Analyze the lyrics and the song description below.

2. For each line of lyrics, estimate a reasonable singing duration. Base your estimation jointly on:
- The intrinsic characteristics of the line itself (e.g., length, phrasing, complexity)
- The overall song attributes;
- The structural flow of the song, including instrumental breaks, natural pauses, and transitions;

3. Return: Output a complete `.lrc` style list with timestamps.

Below are the target global song description and lyrics. Please follow the instructions above and return the completed .lrc file directly.

Song Description

";

/// One instruction/target pair. `id` names the source record and is not part of the JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationExample {
    #[serde(skip)]
    pub id: String,
    pub instruction: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DurationDataset {
    pub examples: Vec<DurationExample>,
    pub skipped: Vec<Rejection>,
}

impl DurationDataset {
    /// `{"instruction": .., "target": ..}` per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// The duration-prediction prompt: description, then each section's bracketed
/// caption followed by its lyric lines, between the start and end markers.
pub fn render_instruction(global: &str, sections: &[(String, Vec<String>)]) -> String {
    let mut out = String::from(HEADER);
    out.push_str(global);
    out.push_str("\n\nLyrics\n\n");
    out.push_str(&format!("[{BOUNDARY_START_TEXT}]\n\n"));
    for (caption, lines) in sections {
        if !caption.is_empty() {
            out.push_str(&format!("[{caption}]\n\n"));
        }
        for line in lines {
            out.push_str(line);
            out.push('\n');
        }
        if !lines.is_empty() {
            out.push('\n');
        }
    }
    out.push_str(&format!("[{BOUNDARY_END_TEXT}]\n\nLRC Prediction:\n"));
    out
}

fn sections_of(record: &Record, doc: &LrcDocument) -> std::result::Result<Vec<(String, Vec<String>)>, &'static str> {
    let text: Vec<String> = doc.lines().iter().map(|l| l.text.clone()).collect();
    if record.segments.is_empty() {
        return Ok(vec![(String::new(), text)]);
    }
    record
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let caption = record.captions.get(&i.to_string()).ok_or("missing-caption")?;
            let lines = match s.lines {
                Some([a, b]) if a <= b && b <= text.len() => text[a..b].to_vec(),
                Some(_) => return Err("bad-line-range"),
                None => vec![],
            };
            Ok((caption.clone(), lines))
        })
        .collect()
}

/// Instruction/target pairs from records with timed lyrics and captions; the
/// rest are listed in `skipped` with a reason.
pub fn build_duration_dataset(records: &[Record]) -> DurationDataset {
    let mut out = DurationDataset::default();
    for r in records {
        let skip = |out: &mut DurationDataset, reason: &str| out.skipped.push(Rejection { id: r.id.clone(), reason: reason.into() });
        let Some(global) = r.captions.get("global") else {
            skip(&mut out, "missing-caption");
            continue;
        };
        let doc = match r.lyrics.as_ref().and_then(|l| l.document()) {
            Some(Ok(doc)) if !doc.is_empty() => doc,
            Some(Err(_)) => {
                skip(&mut out, "lyrics-unparsable");
                continue;
            }
            _ => {
                skip(&mut out, "no-timestamps");
                continue;
            }
        };
        match sections_of(r, &doc) {
            Ok(sections) => out.examples.push(DurationExample {
                id: r.id.clone(),
                instruction: render_instruction(global, &sections),
                target: serialize_lrc(&doc),
            }),
            Err(reason) => skip(&mut out, reason),
        }
    }
    out
}
