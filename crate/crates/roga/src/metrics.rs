//! Evaluation metrics for binary scores: accuracy, ROC AUC, average
//! precision, and equal error rate.
//!
//! AUC is the Mann–Whitney statistic (tied scores credited 0.5), computed
//! via an `O(N log N)` midrank pass. EER sweeps thresholds over the
//! distinct scores and linearly interpolates the operating point where the
//! false-positive and false-negative rates cross.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All four metrics over one evaluation set, plus the class counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub auc: f64,
    pub ap: f64,
    pub eer: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("no examples to evaluate".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite score {} at index {i}",
            scores[i]
        )));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::InvalidInput(format!(
            "label {} at index {i} is not 0 or 1",
            labels[i]
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((n_pos, labels.len() - n_pos))
}

fn require_both_classes(n_pos: usize, n_neg: usize) -> Result<()> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(format!(
            "need both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    Ok(())
}

/// Fraction of examples where `score ≥ threshold` matches the label. Ties
/// at the threshold count as positive predictions.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    validate(scores, labels)?;
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= threshold) == (y == 1))
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties credited 0.5. Computed through midranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = validate(scores, labels)?;
    require_both_classes(n_pos, n_neg)?;

    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // Midrank of the tie group [i, j] with 1-based ranks; sums of
        // half-integers below 2^53 stay exact in f64.
        let midrank = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }

    let np = n_pos as f64;
    let nn = n_neg as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Step-wise average precision: mean over positives, in descending-score
/// order, of the precision at each positive's cut. Ties keep input order
/// (stable sort).
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, _) = validate(scores, labels)?;
    if n_pos == 0 {
        return Err(Error::Degenerate("average precision needs at least one positive".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut true_positives = 0usize;
    let mut sum = 0.0;
    for (rank0, &i) in idx.iter().enumerate() {
        if labels[i] == 1 {
            true_positives += 1;
            sum += true_positives as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Equal error rate: the common rate at the crossing of the
/// false-positive-rate and false-negative-rate curves over the threshold
/// sweep, linearly interpolated between the adjacent operating points where
/// `FPR − FNR` changes sign.
pub fn eer(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = validate(scores, labels)?;
    require_both_classes(n_pos, n_neg)?;

    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let np = n_pos as f64;
    let nn = n_neg as f64;

    // Operating points as the threshold drops through each distinct score;
    // predictions are positive iff score ≥ threshold. The sweep starts
    // above the maximum (FPR 0, FNR 1) and ends at the minimum (FPR 1,
    // FNR 0), so FPR − FNR crosses zero exactly once.
    let (mut prev_fpr, mut prev_fnr) = (0.0f64, 1.0f64);
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let fpr = fp as f64 / nn;
        let fnr = (np - tp as f64) / np;
        let d = fpr - fnr;
        if d >= 0.0 {
            if d == 0.0 {
                return Ok(fpr);
            }
            let prev_d = prev_fpr - prev_fnr;
            let t = -prev_d / (d - prev_d);
            return Ok(prev_fpr + t * (fpr - prev_fpr));
        }
        prev_fpr = fpr;
        prev_fnr = fnr;
        i = j + 1;
    }
    // Unreachable: the final operating point has FPR 1, FNR 0.
    Ok(prev_fpr.max(prev_fnr))
}

/// Computes the full report at the given accuracy threshold.
pub fn report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    let (n_pos, n_neg) = validate(scores, labels)?;
    require_both_classes(n_pos, n_neg)?;
    Ok(MetricsReport {
        acc: accuracy(scores, labels, threshold)?,
        auc: auc(scores, labels)?,
        ap: average_precision(scores, labels)?,
        eer: eer(scores, labels)?,
        n_pos,
        n_neg,
    })
}
