use super::percentile;
use crate::{Error, Result};

/// Every ordered `(win, lose)` pair whose score gap exceeds `min_diff` and whose
/// winner scores above the group's third quartile, sorted by ids.
pub fn dpo_pair_select(group: &[(String, f64)], min_diff: f64) -> Result<Vec<(String, String)>> {
    if group.len() < 2 {
        return Err(Error::Contract(format!("pair selection needs at least 2 samples, got {}", group.len())));
    }
    if !min_diff.is_finite() || group.iter().any(|(_, s)| !s.is_finite()) {
        return Err(Error::Contract("scores and threshold must be finite".into()));
    }
    let scores: Vec<f64> = group.iter().map(|g| g.1).collect();
    let q3 = percentile(&scores, 0.75)?;
    let mut pairs: Vec<(String, String)> = group
        .iter()
        .filter(|(_, w)| *w > q3)
        .flat_map(|(win, w)| {
            group.iter().filter(move |(_, l)| w - l > min_diff).map(move |(lose, _)| (win.clone(), lose.clone()))
        })
        .collect();
    pairs.sort();
    Ok(pairs)
}
