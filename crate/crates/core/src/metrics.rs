//! Evaluation metrics.

use crate::error::{Error, Result};

/// Area under the ROC curve from scores and 0/1 labels.
///
/// Computed through the rank-sum statistic with average ranks for ties, so
/// tied scores across classes count one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let np = positives as f64;
    let nn = negatives as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Fraction of scores whose decision `score >= threshold` disagrees with the label.
pub fn misclassification(prob: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    if prob.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: prob.len(),
        });
    }
    if prob.is_empty() {
        return Err(Error::EmptyInput);
    }
    let wrong = prob
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= threshold) != (**y == 1.0))
        .count();
    Ok(wrong as f64 / prob.len() as f64)
}
