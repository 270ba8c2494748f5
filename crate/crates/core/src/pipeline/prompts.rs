use crate::conditioning::{PromptSpec, SegmentSpec};
use crate::lrc::SegmentKind;
use crate::{Error, Result};

pub const BOUNDARY_START_TEXT: &str = "This piece is the start of the song.";
pub const BOUNDARY_END_TEXT: &str = "This piece is the end of the song.";

/// Length of each boundary prompt in seconds.
const EDGE: f64 = 0.5;

/// `"[label] caption"`. A caption that already carries the label prefix is refused
/// so the label is never stacked twice.
pub fn assemble_segment_caption(label: &str, raw_caption: &str) -> Result<String> {
    if label.trim().is_empty() {
        return Err(Error::Contract("structure label must be non-empty".into()));
    }
    let prefix = format!("[{label}]");
    if raw_caption.starts_with(&prefix) {
        return Err(Error::Contract(format!("caption already starts with {prefix}")));
    }
    Ok(format!("{prefix} {raw_caption}"))
}

/// Adds the fixed start and end prompts over the first and last half second,
/// trimming existing segments to `[max(s, 0.5), min(e, D − 0.5))` and dropping
/// any left empty.
pub fn insert_boundary_prompts(spec: &PromptSpec, total_duration: f64) -> Result<PromptSpec> {
    if !(total_duration > 2.0 * EDGE) {
        return Err(Error::Contract(format!("song of {total_duration} s is too short for boundary prompts")));
    }
    spec.validate()?;
    let tail = total_duration - EDGE;
    let mut segments = vec![SegmentSpec::new(0.0, EDGE, BOUNDARY_START_TEXT, SegmentKind::Boundary)];
    for s in spec.segments.iter().filter(|s| s.kind != SegmentKind::Boundary) {
        let (start, end) = (s.start.max(EDGE), s.end.min(tail));
        if end > start {
            segments.push(SegmentSpec { start, end, ..s.clone() });
        }
    }
    segments.push(SegmentSpec::new(tail, total_duration, BOUNDARY_END_TEXT, SegmentKind::Boundary));
    let out = PromptSpec { global: spec.global.clone(), segments, negative: spec.negative.clone() };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn caption_format() {
        assert_eq!(assemble_segment_caption("chorus", "soaring strings").unwrap(), "[chorus] soaring strings");
        assert_eq!(assemble_segment_caption("chorus", "").unwrap(), "[chorus] ");
        let once = assemble_segment_caption("verse", "soft piano").unwrap();
        assert!(assemble_segment_caption("verse", &once).is_err());
        assert!(assemble_segment_caption("", "x").is_err());
    }

    #[test]
    fn ten_second_song_without_segments() {
        let out = insert_boundary_prompts(&PromptSpec::new("pop", vec![]).unwrap(), 10.0).unwrap();
        assert_eq!(out.segments.len(), 2);
        assert_eq!((out.segments[0].start, out.segments[0].end), (0.0, 0.5));
        assert_eq!((out.segments[1].start, out.segments[1].end), (9.5, 10.0));
        assert_eq!(out.segments[0].text, BOUNDARY_START_TEXT);
        assert_eq!(out.segments[1].text, BOUNDARY_END_TEXT);
        assert!(out.segments.iter().all(|s| s.kind == SegmentKind::Boundary));
    }

    #[test]
    fn overlapping_segments_are_trimmed() {
        let spec = PromptSpec::new(
            "pop",
            vec![
                SegmentSpec::new(0.0, 3.0, "intro", SegmentKind::Instrumental),
                SegmentSpec::new(3.0, 9.8, "verse", SegmentKind::Lyric),
                SegmentSpec::new(9.8, 10.0, "tail", SegmentKind::Instrumental),
            ],
        )
        .unwrap();
        let out = insert_boundary_prompts(&spec, 10.0).unwrap();
        let spans: Vec<(f64, f64, &str)> = out.segments.iter().map(|s| (s.start, s.end, s.text.as_str())).collect();
        assert_eq!(
            spans,
            vec![(0.0, 0.5, BOUNDARY_START_TEXT), (0.5, 3.0, "intro"), (3.0, 9.5, "verse"), (9.5, 10.0, BOUNDARY_END_TEXT)]
        );
        assert!(insert_boundary_prompts(&spec, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn result_always_validates(cuts in prop::collection::vec(0.0f64..30.0, 0..8), d in 1.01f64..30.0) {
            let mut cuts = cuts;
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let segments: Vec<SegmentSpec> = cuts
                .windows(2)
                .map(|w| SegmentSpec::new(w[0], w[1], "x", SegmentKind::Lyric))
                .collect();
            let spec = PromptSpec::new("g", segments).unwrap();
            let out = insert_boundary_prompts(&spec, d).unwrap();
            prop_assert!(out.validate().is_ok());
            prop_assert_eq!(out.segments.first().unwrap().text.as_str(), BOUNDARY_START_TEXT);
            prop_assert_eq!(out.segments.last().unwrap().text.as_str(), BOUNDARY_END_TEXT);
            for s in &out.segments[1..out.segments.len() - 1] {
                prop_assert!(s.start >= 0.5 && s.end <= d - 0.5 && s.start < s.end);
            }
        }
    }
}
