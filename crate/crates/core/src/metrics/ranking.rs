use crate::error::{Error, Result};
use crate::metrics::check_scored;

/// Indices sorted by descending score; equal scores keep ascending index order.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Runs of equal score in `order`, yielding `(positives, negatives)` per run.
fn tie_groups(scores: &[f64], labels: &[bool], order: &[usize]) -> Vec<(u64, u64)> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut p, mut n) = (0, 0);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        groups.push((p, n));
    }
    groups
}

fn class_counts(labels: &[bool]) -> (u64, u64) {
    let p = labels.iter().filter(|&&l| l).count() as u64;
    (p, labels.len() as u64 - p)
}

/// Area under the ROC curve in Mann–Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn au_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scored(scores, labels)?;
    let (np, nn) = class_counts(labels);
    if np == 0 || nn == 0 {
        return Err(Error::UndefinedMetric(
            "AU-ROC needs both positive and negative samples".into(),
        ));
    }
    let order = rank_order(scores);
    // walk from the highest score; negatives seen so far outrank later positives
    let mut twice_wins: u128 = 0;
    let mut neg_below: u64 = nn;
    for (p, n) in tie_groups(scores, labels, &order) {
        neg_below -= n;
        twice_wins += 2 * p as u128 * neg_below as u128 + p as u128 * n as u128;
    }
    Ok(twice_wins as f64 / (2 * np as u128 * nn as u128) as f64)
}

/// Mean precision at the rank of each positive, ranking by [`rank_order`].
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scored(scores, labels)?;
    let (np, _) = class_counts(labels);
    if np == 0 {
        return Err(Error::UndefinedMetric("AP needs at least one positive".into()));
    }
    let mut tp = 0u64;
    let mut sum = 0.0;
    for (rank, &i) in rank_order(scores).iter().enumerate() {
        if labels[i] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / np as f64)
}

/// Best F1 over thresholds at the distinct score values, predicting
/// anomalous when `score ≥ threshold`.
pub fn f1_max(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scored(scores, labels)?;
    let (np, _) = class_counts(labels);
    if np == 0 {
        return Err(Error::UndefinedMetric("F1 needs at least one positive".into()));
    }
    let order = rank_order(scores);
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best: f64 = 0.0;
    for (p, n) in tie_groups(scores, labels, &order) {
        tp += p;
        fp += n;
        let f1 = (2 * tp) as f64 / (2 * tp + fp + (np - tp)) as f64;
        best = best.max(f1);
    }
    Ok(best)
}
