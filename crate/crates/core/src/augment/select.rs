use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AugmentError, Direction, Metric, Result};
use crate::grasp::knn;
use crate::latent::LatentVector;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPair {
    pub a: String,
    pub b: String,
    pub metric: Metric,
    /// Rank of `b` among `a`'s neighbours, counted from 1.
    pub neighbor_rank: usize,
}

/// Linearly interpolated `t`-th percentile of `values` (`t` in [0, 100]).
pub fn percentile(values: &[f64], t: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&t) {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = t / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    Some(match s.get(lo + 1) {
        Some(hi) if frac > 0.0 => s[lo] + frac * (hi - s[lo]),
        _ => s[lo],
    })
}

/// Ids whose score strictly exceeds the `t`-th percentile of all scores.
pub fn select_high_scoring(scores: &BTreeMap<String, f64>, t: f64) -> Result<BTreeSet<String>> {
    if !(t > 0.0 && t < 100.0) {
        return Err(AugmentError::InvalidArgument(format!("t = {t} must lie in (0, 100)")));
    }
    if scores.is_empty() {
        return Err(AugmentError::InvalidArgument("no scores to select from".into()));
    }
    if let Some((id, v)) = scores.iter().find(|(_, v)| !v.is_finite()) {
        return Err(AugmentError::InvalidArgument(format!("score of {id} is {v}")));
    }
    let mut sorted: Vec<f64> = scores.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    // The interpolated percentile lies in [s[lo], s[lo + 1]) and no score
    // falls strictly between those two, so comparing against s[lo] selects
    // the same ids without rounding in the interpolation.
    let lo = (t / 100.0 * (sorted.len() - 1) as f64).floor() as usize;
    let cut = sorted[lo];
    Ok(scores
        .iter()
        .filter(|(_, &v)| v > cut)
        .map(|(id, _)| id.clone())
        .collect())
}

/// [`select_high_scoring`] on the requested tail.
pub fn select_by(scores: &BTreeMap<String, f64>, t: f64, direction: Direction) -> Result<BTreeSet<String>> {
    match direction {
        Direction::High => select_high_scoring(scores, t),
        Direction::Low => {
            let negated = scores.iter().map(|(k, v)| (k.clone(), -v)).collect();
            select_high_scoring(&negated, t)
        }
    }
}

/// Pairs every shape with its `n`-th through `(n + k)`-th nearest neighbours
/// among `selected`; unordered duplicates keep their first occurrence.
pub fn form_generation_pairs(
    selected: &[(String, LatentVector)],
    n: usize,
    k: usize,
    metric: Metric,
) -> Result<Vec<GenerationPair>> {
    if n == 0 {
        return Err(AugmentError::InvalidArgument("neighbour rank n must be at least 1".into()));
    }
    if selected.len() <= n + k {
        return Err(AugmentError::Insufficient(format!(
            "{} pairing needs at least {} selected shapes, got {}",
            metric.name(),
            n + k + 1,
            selected.len()
        )));
    }
    let latents: Vec<&[f64]> = selected.iter().map(|(_, z)| z.values()).collect();
    let nn = knn(&latents, n + k)?;
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (i, neighbors) in nn.iter().enumerate() {
        for (rank, nb) in neighbors.iter().enumerate().skip(n - 1) {
            let j = nb.index;
            if seen.insert((i.min(j), i.max(j))) {
                pairs.push(GenerationPair {
                    a: selected[i].0.clone(),
                    b: selected[j].0.clone(),
                    metric,
                    neighbor_rank: rank + 1,
                });
            }
        }
    }
    Ok(pairs)
}
