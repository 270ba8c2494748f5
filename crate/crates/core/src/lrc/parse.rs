use super::{LrcDocument, LrcError, LrcLine};

/// Parses `[mm:ss.xx] text` lines.
///
/// Blank lines are skipped. A `[length:mm:ss.xx]` tag, if present, sets the
/// song length; without one the document ends one centisecond after its last
/// onset.
pub fn parse_lrc(raw: &str) -> Result<LrcDocument, LrcError> {
    let mut lines = Vec::new();
    let mut length = None;
    for (idx, raw_line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| LrcError::Parse { line: line_no, message };
        let rest = line.strip_prefix('[').ok_or_else(|| err("expected '[' at start of line".into()))?;
        let close = rest.find(']').ok_or_else(|| err("missing ']'".into()))?;
        let tag = &rest[..close];
        let text = &rest[close + 1..];
        if let Some(value) = tag.strip_prefix("length:") {
            let cs = parse_stamp(value.trim()).map_err(err)?;
            length = Some(cs as f64 / 100.0);
            continue;
        }
        let cs = parse_stamp(tag).map_err(err)?;
        let text = text.strip_prefix(' ').unwrap_or(text);
        lines.push(LrcLine::new(cs as f64 / 100.0, text));
    }
    for (i, pair) in lines.windows(2).enumerate() {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(LrcError::Validation(format!(
                "timestamp {} on lyric line {} precedes {}",
                pair[1].timestamp,
                i + 2,
                pair[0].timestamp
            )));
        }
    }
    let total = match length {
        Some(l) => l,
        None => lines.last().map_or(0.0, |l| l.timestamp) + 0.01,
    };
    LrcDocument::new(lines, total)
}

/// `mm:ss.xx` to centiseconds.
fn parse_stamp(tag: &str) -> Result<u64, String> {
    let bad = || format!("malformed timestamp [{tag}]");
    let (mm, rest) = tag.split_once(':').ok_or_else(bad)?;
    let (ss, xx) = rest.split_once('.').ok_or_else(bad)?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if mm.len() < 2 || !digits(mm) || ss.len() != 2 || !digits(ss) || xx.len() != 2 || !digits(xx) {
        return Err(bad());
    }
    let minutes: u64 = mm.parse().map_err(|_| bad())?;
    let seconds: u64 = ss.parse().map_err(|_| bad())?;
    let centis: u64 = xx.parse().map_err(|_| bad())?;
    if seconds > 59 {
        return Err(format!("seconds field {seconds} out of range in [{tag}]"));
    }
    Ok(minutes * 6000 + seconds * 100 + centis)
}

fn format_stamp(seconds: f64) -> String {
    let cs = (seconds * 100.0).round_ties_even().max(0.0) as u64;
    format!("{:02}:{:02}.{:02}", cs / 6000, (cs / 100) % 60, cs % 100)
}

/// Canonical text: one `[mm:ss.xx] text` line per lyric line, newline-terminated.
pub fn serialize_lrc(doc: &LrcDocument) -> String {
    let mut out = String::new();
    for line in doc.lines() {
        out.push('[');
        out.push_str(&format_stamp(line.timestamp));
        out.push_str("] ");
        out.push_str(&line.text);
        out.push('\n');
    }
    out
}
