//! Prediction-bias and accuracy measurement.
//!
//! Bias is the L1 distance between the ground-truth label distribution
//! (mean of one-hot labels) and the soft prediction distribution (mean of
//! per-sample softmaxes over the 100-scaled logits).

use crate::error::{Error, Result};

/// Empirical class frequencies of ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Mean of per-sample softmax outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPredictionDistribution {
    probs: Vec<f64>,
}

impl SoftPredictionDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Mean one-hot encoding of the labels.
pub fn ground_truth_dist(labels: &[usize], num_classes: usize) -> Result<LabelDistribution> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = vec![0usize; num_classes];
    for &label in labels {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes,
            });
        }
        counts[label] += 1;
    }
    let n = labels.len() as f64;
    Ok(LabelDistribution {
        probs: counts.iter().map(|&c| c as f64 / n).collect(),
    })
}

/// Numerically stable per-row softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() || logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLogits);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

/// Mean of per-row softmaxes over an N×C logit matrix.
pub fn soft_pred_dist(all_logits: &[Vec<f64>]) -> Result<SoftPredictionDistribution> {
    if all_logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let c = all_logits[0].len();
    let mut acc = vec![0.0f64; c];
    for row in all_logits {
        if row.len() != c {
            return Err(Error::DimensionMismatch {
                expected: format!("{c} logits per row"),
                actual: format!("{}", row.len()),
            });
        }
        let p = softmax(row)?;
        for (a, x) in acc.iter_mut().zip(&p) {
            *a += x;
        }
    }
    let n = all_logits.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(SoftPredictionDistribution { probs: acc })
}

/// Build a soft prediction distribution directly from accumulated softmax
/// sums (used by the streaming loop, which keeps running sums per chunk).
pub fn soft_pred_dist_from_sums(softmax_sums: &[f64], n: usize) -> Result<SoftPredictionDistribution> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(SoftPredictionDistribution {
        probs: softmax_sums.iter().map(|s| s / n as f64).collect(),
    })
}

/// `Σ_c |p_c − q_c|`, in [0, 2].
pub fn l1_distance(p: &SoftPredictionDistribution, q: &LabelDistribution) -> Result<f64> {
    if p.probs.len() != q.probs.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} classes", q.probs.len()),
            actual: format!("{} classes", p.probs.len()),
        });
    }
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Exact per-class prediction counts.
pub fn prediction_histogram(predictions: &[usize], num_classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; num_classes];
    for &p in predictions {
        if p >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: p,
                num_classes,
            });
        }
        counts[p] += 1;
    }
    Ok(counts)
}
