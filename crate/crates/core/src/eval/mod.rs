//! Alignment metrics over pluggable scorers, duration error, A/B accuracy, and
//! the synthetic task whose ground truth the oracle scorer can read back.

mod metrics;
mod synthetic;

pub use metrics::{
    ab_accuracy, channel_mean_trace, duration_mae, global_alignment_score, normalize_text, pearson,
    segment_alignment_score, Choice, OracleScorer, SegmentScores, SimilarityScorer,
};
pub use synthetic::{GlobalEntry, PatternEntry, SyntheticTaskSpec};

use serde::{Deserialize, Serialize};

use crate::conditioning::PromptSpec;
use crate::lrc::{FrameRate, LrcDocument, SegmentKind};
use crate::numeric::Tensor;
use crate::Result;

/// Metrics of one generated latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub id: String,
    pub global_alignment: f64,
    /// `None` when the prompt has no scored segments.
    pub segment_alignment: Option<f64>,
    pub segment_scores: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub count: usize,
    pub global_alignment: Option<f64>,
    pub segment_alignment: Option<f64>,
    pub duration_mae: Option<f64>,
}

/// Per-sample rows plus their means. Field names follow the alignment metrics
/// computed here, not any particular scoring model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scorer: String,
    pub samples: Vec<SampleReport>,
    pub aggregate: AggregateReport,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricReport {
    pub fn new(scorer: impl Into<String>, samples: Vec<SampleReport>) -> Self {
        let aggregate = AggregateReport {
            count: samples.len(),
            global_alignment: mean_of(samples.iter().map(|s| s.global_alignment)),
            segment_alignment: mean_of(samples.iter().filter_map(|s| s.segment_alignment)),
            duration_mae: mean_of(samples.iter().filter_map(|s| s.duration_mae)),
        };
        Self { scorer: scorer.into(), samples, aggregate }
    }
}

/// Scores one latent against its prompt, and its predicted lyrics against a reference when both exist.
pub fn evaluate_sample(
    id: impl Into<String>,
    latent: &Tensor,
    spec: &PromptSpec,
    scorer: &dyn SimilarityScorer,
    rate: FrameRate,
    durations: Option<(&LrcDocument, &LrcDocument)>,
) -> Result<SampleReport> {
    let windows = spec.frame_windows(rate, latent.rows())?;
    let scored = spec.segments.iter().any(|s| s.kind != SegmentKind::Boundary);
    let (segment_alignment, segment_scores) = if scored {
        let s = segment_alignment_score(latent, spec, &windows, scorer, false)?;
        (Some(s.mean), s.per_segment)
    } else {
        (None, vec![None; spec.segments.len()])
    };
    Ok(SampleReport {
        id: id.into(),
        global_alignment: global_alignment_score(latent, &spec.global, scorer)?,
        segment_alignment,
        segment_scores,
        duration_mae: durations.map(|(p, t)| duration_mae(p, t)).transpose()?,
    })
}
