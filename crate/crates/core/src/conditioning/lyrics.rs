//! Sentence-level lyric alignment: each line's tokens are laid out one per frame
//! from the line's onset, clipped at the next line.

use super::TextEmbedder;
use crate::lrc::{FrameRate, LrcDocument};
use crate::numeric::Tensor;
use crate::{Error, Result};

/// Lyric features and the number of tokens that did not fit their window.
#[derive(Debug, Clone, PartialEq)]
pub struct LyricEncoding {
    pub features: Tensor,
    pub truncated: usize,
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF)
}

/// Whitespace-separated words, with every CJK character a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut run = String::new();
        for c in word.chars() {
            if is_cjk(c) {
                if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
                tokens.push(c.to_string());
            } else {
                run.push(c);
            }
        }
        if !run.is_empty() {
            tokens.push(run);
        }
    }
    tokens
}

pub fn encode_lyrics(
    doc: &LrcDocument,
    embedder: &dyn TextEmbedder,
    frames: usize,
    rate: FrameRate,
) -> Result<LyricEncoding> {
    let mut features = Tensor::zeros(&[frames, embedder.dim()]);
    let starts = doc
        .lines()
        .iter()
        .map(|l| rate.frame(l.timestamp))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(&last) = starts.last() {
        if last >= frames {
            return Err(Error::Contract(format!("lyric onset frame {last} outside {frames} frames")));
        }
    }
    let mut truncated = 0;
    for (i, line) in doc.lines().iter().enumerate() {
        let start = starts[i];
        let end = starts.get(i + 1).copied().unwrap_or(frames);
        let tokens = tokenize(&line.text);
        let room = end - start;
        truncated += tokens.len().saturating_sub(room);
        for (k, token) in tokens.iter().take(room).enumerate() {
            features.row_mut(start + k).copy_from_slice(&embedder.embed(token));
        }
    }
    Ok(LyricEncoding { features, truncated })
}
