use serde::{Deserialize, Serialize};

use super::SyntheticTaskSpec;
use crate::conditioning::PromptSpec;
use crate::lrc::{LrcDocument, SegmentKind};
use crate::numeric::Tensor;
use crate::{Error, Result};

/// Scores how well a latent matches a text. Scores lie in `[−1, 1]`.
pub trait SimilarityScorer: Sync {
    /// `latent` is the window's slice, its first row the window's first frame.
    fn score_segment(&self, latent: &Tensor, text: &str) -> Result<f64>;
    fn score_global(&self, latent: &Tensor, text: &str) -> Result<f64>;
}

/// Pearson correlation; 0 when either side is constant or shorter than two.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Reads the synthetic task's ground truth back out of a latent.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleScorer {
    pub task: SyntheticTaskSpec,
}

impl OracleScorer {
    pub fn new(task: SyntheticTaskSpec) -> Self {
        Self { task }
    }
}

/// Per-frame mean over channels.
pub fn channel_mean_trace(latent: &Tensor) -> Vec<f64> {
    (0..latent.rows()).map(|r| latent.row(r).iter().sum::<f64>() / latent.cols().max(1) as f64).collect()
}

impl SimilarityScorer for OracleScorer {
    fn score_segment(&self, latent: &Tensor, text: &str) -> Result<f64> {
        let p = self.task.pattern(text)?;
        let reference: Vec<f64> = (0..latent.rows()).map(|k| p.value(k)).collect();
        Ok(pearson(&channel_mean_trace(latent), &reference))
    }

    fn score_global(&self, latent: &Tensor, text: &str) -> Result<f64> {
        let g = self.task.global(text)?;
        let cols = latent.cols();
        let rows = latent.rows().max(1) as f64;
        let means: Vec<f64> = (0..cols).map(|c| (0..latent.rows()).map(|r| latent.get(r, c)).sum::<f64>() / rows).collect();
        Ok(pearson(&means, &g.offset))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScores {
    /// One entry per prompt segment; `None` for excluded boundary segments.
    pub per_segment: Vec<Option<f64>>,
    pub mean: f64,
}

/// Scores each segment window against its text and averages over the scored ones.
pub fn segment_alignment_score(
    latent: &Tensor,
    spec: &PromptSpec,
    windows: &[(usize, usize)],
    scorer: &dyn SimilarityScorer,
    include_boundary: bool,
) -> Result<SegmentScores> {
    if windows.len() != spec.segments.len() {
        return Err(Error::Contract(format!("{} windows for {} segments", windows.len(), spec.segments.len())));
    }
    let mut per_segment = Vec::with_capacity(windows.len());
    let mut scored = Vec::new();
    for (s, &(a, b)) in spec.segments.iter().zip(windows) {
        if s.kind == SegmentKind::Boundary && !include_boundary {
            per_segment.push(None);
            continue;
        }
        if a > b || b > latent.rows() {
            return Err(Error::Contract(format!("window {a}..{b} outside {} frames", latent.rows())));
        }
        let score = scorer.score_segment(&latent.slice_rows(a, b)?, &s.text)?;
        per_segment.push(Some(score));
        scored.push(score);
    }
    if scored.is_empty() {
        return Err(Error::Contract("no segments to average".into()));
    }
    let mean = scored.iter().sum::<f64>() / scored.len() as f64;
    Ok(SegmentScores { per_segment, mean })
}

pub fn global_alignment_score(latent: &Tensor, text: &str, scorer: &dyn SimilarityScorer) -> Result<f64> {
    scorer.score_global(latent, text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

/// Fraction of `(truth, judged)` pairs that agree.
pub fn ab_accuracy(judgments: &[(Choice, Choice)]) -> Result<f64> {
    if judgments.is_empty() {
        return Err(Error::Contract("no judgments".into()));
    }
    Ok(judgments.iter().filter(|(t, j)| t == j).count() as f64 / judgments.len() as f64)
}

/// Lowercase, alphanumerics only, single spaces.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Mean absolute onset error in seconds over lines matched by position.
pub fn duration_mae(predicted: &LrcDocument, truth: &LrcDocument) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract(format!("{} predicted lines for {} reference lines", predicted.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::Contract("no lines to compare".into()));
    }
    let mut total = 0.0;
    for (i, (p, t)) in predicted.lines().iter().zip(truth.lines()).enumerate() {
        if normalize_text(&p.text) != normalize_text(&t.text) {
            return Err(Error::Contract(format!("line {i} text differs: {:?} vs {:?}", p.text, t.text)));
        }
        total += (p.timestamp - t.timestamp).abs();
    }
    Ok(total / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrc::LrcLine;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noiseless() -> SyntheticTaskSpec {
        SyntheticTaskSpec { sigma: 0.0, ..SyntheticTaskSpec::standard(0) }
    }

    #[test]
    fn pearson_degenerate_cases() {
        assert_eq!(pearson(&[1.0], &[2.0]), 0.0);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_scores_are_maximal() {
        let task = noiseless();
        let scorer = OracleScorer::new(task.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let spec = task.random_prompt(&mut rng).unwrap();
            let x = task.synth_sample(&spec, &mut rng).unwrap();
            let w = spec.frame_windows(task.rate().unwrap(), task.frames).unwrap();
            let s = segment_alignment_score(&x, &spec, &w, &scorer, false).unwrap();
            for v in s.per_segment.iter().flatten() {
                assert!((v - 1.0).abs() < 1e-12);
            }
            assert!((s.mean - 1.0).abs() < 1e-12);
            let own = global_alignment_score(&x, &spec.global, &scorer).unwrap();
            assert!((own - 1.0).abs() < 1e-12);
            for g in &task.globals {
                if g.text != spec.global {
                    assert!(global_alignment_score(&x, &g.text, &scorer).unwrap() < own);
                }
            }
        }
    }

    #[test]
    fn single_segment_mean_is_its_score() {
        let task = noiseless();
        let scorer = OracleScorer::new(task.clone());
        let spec = PromptSpec::new(task.globals[0].text.clone(), vec![task.segment(0, 20, "slow swelling strings").unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = task.synth_sample(&spec, &mut rng).unwrap();
        x.values_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        let s = segment_alignment_score(&x, &spec, &[(0, 20)], &scorer, false).unwrap();
        assert_eq!(s.mean, s.per_segment[0].unwrap());
    }

    #[test]
    fn shuffling_patterns_lowers_the_mean() {
        let task = noiseless();
        let scorer = OracleScorer::new(task.clone());
        let rate = task.rate().unwrap();
        let g = task.globals[0].text.clone();
        let texts: Vec<String> = task.patterns.iter().map(|p| p.text.clone()).collect();
        let spec = PromptSpec::new(
            g,
            vec![
                task.segment(0, 20, &texts[0]).unwrap(),
                task.segment(20, 40, &texts[1]).unwrap(),
                task.segment(40, 64, &texts[2]).unwrap(),
            ],
        )
        .unwrap();
        let x = task.synth_sample(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let w = spec.frame_windows(rate, task.frames).unwrap();
        let truth = segment_alignment_score(&x, &spec, &w, &scorer, false).unwrap().mean;
        let mut shuffled = spec.clone();
        shuffled.segments[0].text = texts[1].clone();
        shuffled.segments[1].text = texts[2].clone();
        shuffled.segments[2].text = texts[0].clone();
        let worse = segment_alignment_score(&x, &shuffled, &w, &scorer, false).unwrap().mean;
        assert!(worse < truth, "{worse} vs {truth}");
    }

    #[test]
    fn boundaries_are_excluded_unless_asked() {
        let task = noiseless();
        let scorer = OracleScorer::new(task.clone());
        let mut b = task.segment(0, 10, "fast shimmering hi-hats").unwrap();
        b.kind = SegmentKind::Boundary;
        let spec = PromptSpec::new(task.globals[0].text.clone(), vec![b]).unwrap();
        let x = Tensor::zeros(&[task.frames, task.d_audio]);
        assert!(segment_alignment_score(&x, &spec, &[(0, 10)], &scorer, false).is_err());
        let s = segment_alignment_score(&x, &spec, &[(0, 10)], &scorer, true).unwrap();
        assert_eq!(s.per_segment, vec![Some(0.0)]);
        let empty = PromptSpec::new("x", vec![]).unwrap();
        assert!(segment_alignment_score(&x, &empty, &[], &scorer, false).is_err());
    }

    proptest! {
        #[test]
        fn scores_are_bounded_and_the_mean_is_arithmetic(seed in any::<u64>()) {
            let task = SyntheticTaskSpec::standard(seed);
            let scorer = OracleScorer::new(task.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = task.random_prompt(&mut rng).unwrap();
            let mut x = Tensor::zeros(&[task.frames, task.d_audio]);
            x.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
            let w = spec.frame_windows(task.rate().unwrap(), task.frames).unwrap();
            let s = segment_alignment_score(&x, &spec, &w, &scorer, false).unwrap();
            let scores: Vec<f64> = s.per_segment.iter().flatten().copied().collect();
            prop_assert_eq!(s.mean, scores.iter().sum::<f64>() / scores.len() as f64);
            for v in scores {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
            for g in &task.globals {
                let v = global_alignment_score(&x, &g.text, &scorer).unwrap();
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn ab_accuracy_cases() {
        assert_eq!(ab_accuracy(&[(Choice::A, Choice::A), (Choice::B, Choice::B)]).unwrap(), 1.0);
        let alt: Vec<_> = (0..10).map(|i| (Choice::A, if i % 2 == 0 { Choice::A } else { Choice::B })).collect();
        assert_eq!(ab_accuracy(&alt).unwrap(), 0.5);
        assert!(ab_accuracy(&[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pick = |r: &mut ChaCha8Rng| if r.random::<bool>() { Choice::A } else { Choice::B };
        let random: Vec<_> = (0..10_000).map(|_| (pick(&mut rng), pick(&mut rng))).collect();
        assert!((ab_accuracy(&random).unwrap() - 0.5).abs() <= 0.05);
    }

    fn doc(times: &[f64]) -> LrcDocument {
        let lines = times.iter().enumerate().map(|(i, &t)| LrcLine::new(t, format!("line {i}"))).collect();
        LrcDocument::new(lines, 1000.0).unwrap()
    }

    #[test]
    fn duration_mae_cases() {
        let gt = doc(&[1.0, 4.5, 9.25]);
        assert_eq!(duration_mae(&gt, &gt).unwrap(), 0.0);
        assert!((duration_mae(&gt.shifted(1.0).unwrap(), &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!(duration_mae(&doc(&[1.0]), &gt).is_err());
        let renamed = LrcDocument::new(vec![LrcLine::new(1.0, "other")], 10.0).unwrap();
        assert!(duration_mae(&renamed, &doc(&[1.0])).is_err());
        let punct = LrcDocument::new(vec![LrcLine::new(2.0, "Line, 0!")], 10.0).unwrap();
        assert_eq!(duration_mae(&punct, &doc(&[1.5])).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn duration_mae_is_the_per_line_average(
            base in prop::collection::vec(0.0f64..5.0, 1..20),
            noise in prop::collection::vec(-3.0f64..3.0, 20),
            shift in 0.0f64..50.0,
        ) {
            let mut times = Vec::new();
            let mut t = 0.0;
            for b in &base {
                t += b;
                times.push(t);
            }
            let gt = doc(&times);
            let pred_times: Vec<f64> = times.iter().zip(&noise).map(|(a, n)| a + n).collect();
            let mut sorted = pred_times.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted == pred_times && sorted[0] >= 0.0 {
                let pred = doc(&pred_times);
                let brute = times.iter().zip(&pred_times).map(|(a, b)| (a - b).abs()).sum::<f64>() / times.len() as f64;
                prop_assert!((duration_mae(&pred, &gt).unwrap() - brute).abs() < 1e-12);
            }
            let shifted = gt.shifted(shift).unwrap();
            prop_assert!((duration_mae(&shifted, &gt).unwrap() - shift).abs() < 1e-9);
        }
    }
}
