use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{percentile, FilterReport, Flag, Record};
use crate::eval::normalize_text;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    /// Records below this rate are dropped (strict `<`).
    pub min_sampling_rate: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    /// Fraction of the lowest aggregate scores dropped.
    pub drop_fraction: f64,
    /// Metrics averaged into the aggregate; empty means every metric a record has.
    pub metrics: Vec<String>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { min_sampling_rate: 32_000.0, min_duration: 30.0, max_duration: 360.0, drop_fraction: 0.05, metrics: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub min_sampling_rate: f64,
    pub channels: u32,
    /// Each metric must be at least this quantile of the candidates (0.5: top half).
    pub quantile: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { min_sampling_rate: 44_000.0, channels: 2, quantile: 0.5 }
    }
}

fn aggregate_score(r: &Record, metrics: &[String]) -> Option<f64> {
    if metrics.is_empty() {
        if r.quality_scores.is_empty() {
            return None;
        }
        return Some(r.quality_scores.values().sum::<f64>() / r.quality_scores.len() as f64);
    }
    let mut total = 0.0;
    for m in metrics {
        total += r.quality_scores.get(m)?;
    }
    Some(total / metrics.len() as f64)
}

/// Stage-one filter: metadata gates in order, then the lowest `drop_fraction`
/// of aggregate quality among the survivors.
pub fn pretrain_filter(records: &[Record], config: &PretrainConfig) -> Result<FilterReport> {
    let mut report = FilterReport::default();
    let mut candidates = Vec::new();
    for r in records {
        let reason = if r.sampling_rate < config.min_sampling_rate {
            Some("sampling-rate")
        } else if r.duration < config.min_duration || r.duration > config.max_duration {
            Some("duration-out-of-range")
        } else if !r.compression_ok {
            Some("compression")
        } else if !r.energy_ok {
            Some("energy")
        } else {
            None
        };
        match (reason, aggregate_score(r, &config.metrics)) {
            (Some(reason), _) => report.reject(&r.id, reason),
            (None, None) => report.reject(&r.id, "missing-score"),
            (None, Some(score)) => candidates.push((r.id.as_str(), score)),
        }
    }
    if !candidates.is_empty() {
        let scores: Vec<f64> = candidates.iter().map(|c| c.1).collect();
        let floor = percentile(&scores, config.drop_fraction)?;
        for (id, score) in candidates {
            if score < floor {
                report.reject(id, "low-quality");
            } else {
                report.kept.push(id.to_string());
            }
        }
    }
    Ok(report)
}

/// Stage-two filter: high-rate stereo records at or above the median on every metric.
pub fn finetune_filter(records: &[Record], config: &FinetuneConfig) -> Result<FilterReport> {
    let mut report = FilterReport::default();
    let mut candidates = Vec::new();
    for r in records {
        if r.sampling_rate < config.min_sampling_rate {
            report.reject(&r.id, "sampling-rate");
        } else if r.channels != config.channels {
            report.reject(&r.id, "channels");
        } else if !r.compression_ok {
            report.reject(&r.id, "compression");
        } else if !r.energy_ok {
            report.reject(&r.id, "energy");
        } else {
            candidates.push(r);
        }
    }
    let metrics: BTreeSet<&String> = candidates.iter().flat_map(|r| r.quality_scores.keys()).collect();
    let (scored, missing): (Vec<&Record>, Vec<&Record>) = candidates
        .into_iter()
        .partition(|r| !r.quality_scores.is_empty() && metrics.iter().all(|m| r.quality_scores.contains_key(*m)));
    let mut floors = Vec::new();
    for m in &metrics {
        let values: Vec<f64> = scored.iter().map(|r| r.quality_scores[*m]).collect();
        if !values.is_empty() {
            floors.push((*m, percentile(&values, config.quantile)?));
        }
    }
    let missing: BTreeSet<&str> = missing.iter().map(|r| r.id.as_str()).collect();
    for r in records {
        if missing.contains(r.id.as_str()) {
            report.reject(&r.id, "missing-score");
        } else if scored.iter().any(|s| std::ptr::eq(*s, r)) {
            if floors.iter().all(|(m, f)| r.quality_scores[*m] >= *f) {
                report.kept.push(r.id.clone());
            } else {
                report.reject(&r.id, "below-median");
            }
        }
    }
    Ok(report)
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance of the normalized texts divided by the longer length (0 for two empty texts).
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize_text(a), normalize_text(b));
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / longest as f64
}

/// Drops records whose lyrics and transcript disagree by more than `max_distance`.
/// Records with lyrics but no transcript pass with the flag `unverified`.
pub fn lyric_edit_filter(records: &[Record], max_distance: f64) -> Result<FilterReport> {
    let mut report = FilterReport::default();
    for r in records {
        let lyrics = match &r.lyrics {
            Some(l) => match l.lines() {
                Ok(lines) => lines.join(" "),
                Err(_) => {
                    report.reject(&r.id, "lyrics-unparsable");
                    continue;
                }
            },
            None => String::new(),
        };
        match &r.transcript {
            None => {
                report.kept.push(r.id.clone());
                if r.lyrics.is_some() {
                    report.flags.push(Flag { id: r.id.clone(), flag: "unverified".into() });
                }
            }
            Some(t) => {
                if normalized_edit_distance(&lyrics, &t.join(" ")) > max_distance {
                    report.reject(&r.id, "edit-distance");
                } else {
                    report.kept.push(r.id.clone());
                }
            }
        }
    }
    Ok(report)
}
