//! Confusion matrices and the scalar metrics derived from scores and labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[k'][k]`: number of class-`k` samples predicted as `k'` (0-based storage).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion matrix must be square and nonempty"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Entry for predicted class `predicted` and true class `actual`, both 1-based.
    pub fn get(&self, predicted: usize, actual: usize) -> u64 {
        self.counts[predicted - 1][actual - 1]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Column sums, i.e. the per-class sample counts `N_k`.
    pub fn class_totals(&self) -> Vec<u64> {
        (0..self.k())
            .map(|k| self.counts.iter().map(|row| row[k]).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn check_label(l: usize, k: usize) -> Result<()> {
    if l == 0 || l > k {
        return Err(Error::invalid(format!("label {l} outside 1..={k}")));
    }
    Ok(())
}

/// Tallies 1-based predictions against 1-based labels over `k` classes.
pub fn confusion(predictions: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &l) in predictions.iter().zip(labels) {
        check_label(p, k)?;
        check_label(l, k)?;
        counts[p - 1][l - 1] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

/// `(1/K) Σ_k V_kk / N_k`.
pub fn balanced_accuracy(v: &ConfusionMatrix) -> Result<f64> {
    let totals = v.class_totals();
    if let Some(k) = totals.iter().position(|&n| n == 0) {
        return Err(Error::DegenerateClass { class: k + 1 });
    }
    let k = v.k();
    Ok((0..k)
        .map(|i| v.counts[i][i] as f64 / totals[i] as f64)
        .sum::<f64>()
        / k as f64)
}

/// Balanced accuracy averaged over the classes that actually occur.
///
/// Used on validation folds, where a rare class can be missing entirely.
pub fn balanced_accuracy_observed(v: &ConfusionMatrix) -> f64 {
    let totals = v.class_totals();
    let present: Vec<usize> = (0..v.k()).filter(|&k| totals[k] > 0).collect();
    if present.is_empty() {
        return 0.0;
    }
    present
        .iter()
        .map(|&k| v.counts[k][k] as f64 / totals[k] as f64)
        .sum::<f64>()
        / present.len() as f64
}

fn check_scores(scores: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid("scores and labels must be nonempty and equally long"));
    }
    let k = scores[0].len();
    if scores.iter().any(|s| s.len() != k) {
        return Err(Error::invalid("score vectors differ in length"));
    }
    for &l in labels {
        check_label(l, k)?;
    }
    Ok(k)
}

/// `Σ_k p_k · mean_{i∈C_k} score_i[k]`; classes absent from `labels` contribute zero.
pub fn empirical_success_probability(scores: &[Vec<f64>], labels: &[usize], priors: &[f64]) -> Result<f64> {
    let k = check_scores(scores, labels)?;
    if priors.len() != k {
        return Err(Error::invalid("one prior per class required"));
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (s, &l) in scores.iter().zip(labels) {
        sums[l - 1] += s[l - 1];
        counts[l - 1] += 1;
    }
    Ok((0..k)
        .filter(|&c| counts[c] > 0)
        .map(|c| priors[c] * sums[c] / counts[c] as f64)
        .sum())
}

/// `(1/N) Σ_{i,k} (score_ik − δ_{y_i,k})²`.
pub fn mean_squared_error(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_scores(scores, labels)?;
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &l)| {
            s.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let t = if k + 1 == l { 1.0 } else { 0.0 };
                    (v - t) * (v - t)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}
