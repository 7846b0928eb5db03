//! Evaluation metrics: Top-K accuracy (classification and regression
//! variants), throughput ratio, circular mean absolute first difference
//! (MAFD) of best-beam indices, and measurement overhead reduction (MOR).
//!
//! All tie-breaks go to the lowest beam index, matching beam selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Top-K accuracy over a batch of examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKResult {
    pub k: usize,
    pub accuracy: f64,
    pub hits: usize,
    pub total: usize,
}

/// Throughput ratio: achieved spectral-efficiency proxy of the predicted
/// beams over that of the optimal beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrResult {
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
}

/// Rank of index `target` in `scores` under descending score with ties
/// broken by lowest index: the number of indices that would be listed
/// before it.
fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < target))
        .count()
}

/// Classification Top-K: a hit when the true best index is among the `k`
/// highest-scoring predicted indices.
pub fn topk_accuracy(
    predicted_scores: &[Vec<f64>],
    true_best: &[usize],
    k: usize,
) -> Result<TopKResult> {
    if predicted_scores.is_empty() {
        return Err(Error::InvalidInput("no examples".into()));
    }
    if predicted_scores.len() != true_best.len() {
        return Err(Error::Shape(format!(
            "{} score vectors vs {} labels",
            predicted_scores.len(),
            true_best.len()
        )));
    }
    let m = predicted_scores[0].len();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("k={k} outside [1, {m}]")));
    }
    let mut hits = 0usize;
    for (scores, &truth) in predicted_scores.iter().zip(true_best.iter()) {
        if scores.len() != m {
            return Err(Error::Shape("ragged score vectors".into()));
        }
        if truth >= m {
            return Err(Error::InvalidInput(format!(
                "true index {truth} out of range for M={m}"
            )));
        }
        if rank_of(scores, truth) < k {
            hits += 1;
        }
    }
    let total = predicted_scores.len();
    Ok(TopKResult {
        k,
        accuracy: hits as f64 / total as f64,
        hits,
        total,
    })
}

/// Regression Top-K: a hit when the argmax of the predicted gains lands
/// among the `k` highest entries of the true gain vector.
pub fn topk_regression(
    predicted_gains: &[Vec<f64>],
    true_gains: &[Vec<f64>],
    k: usize,
) -> Result<TopKResult> {
    if predicted_gains.is_empty() {
        return Err(Error::InvalidInput("no examples".into()));
    }
    if predicted_gains.len() != true_gains.len() {
        return Err(Error::Shape(format!(
            "{} predicted vs {} true vectors",
            predicted_gains.len(),
            true_gains.len()
        )));
    }
    let m = predicted_gains[0].len();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("k={k} outside [1, {m}]")));
    }
    let mut hits = 0usize;
    for (pred, truth) in predicted_gains.iter().zip(true_gains.iter()) {
        if pred.len() != truth.len() || pred.len() != m {
            return Err(Error::Shape("predicted/true gain length mismatch".into()));
        }
        let chosen = argmax(pred);
        if rank_of(truth, chosen) < k {
            hits += 1;
        }
    }
    let total = predicted_gains.len();
    Ok(TopKResult {
        k,
        accuracy: hits as f64 / total as f64,
        hits,
        total,
    })
}

/// Argmax with ties broken by lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Throughput ratio `TR = Σ log2(1 + g_pred) / Σ log2(1 + g_best)` over
/// per-example linear power gains.
pub fn throughput_ratio(predicted_gain: &[f64], best_gain: &[f64]) -> Result<TrResult> {
    if predicted_gain.len() != best_gain.len() {
        return Err(Error::Shape(format!(
            "{} predicted vs {} best gains",
            predicted_gain.len(),
            best_gain.len()
        )));
    }
    if predicted_gain.iter().chain(best_gain).any(|&g| g < 0.0) {
        return Err(Error::InvalidInput("gains must be non-negative".into()));
    }
    let numerator: f64 = predicted_gain.iter().map(|&g| (1.0 + g).log2()).sum();
    let denominator: f64 = best_gain.iter().map(|&g| (1.0 + g).log2()).sum();
    if denominator == 0.0 {
        return Err(Error::Degenerate(
            "throughput ratio denominator is zero".into(),
        ));
    }
    Ok(TrResult {
        ratio: numerator / denominator,
        numerator,
        denominator,
    })
}

/// Circular absolute difference between two beam indices:
/// `min((prev - curr) mod n, (curr - prev) mod n)`.
pub fn circular_diff(prev: usize, curr: usize, n_total: usize) -> Result<usize> {
    if prev >= n_total || curr >= n_total {
        return Err(Error::InvalidInput(format!(
            "beam index out of range: prev={prev} curr={curr} n_total={n_total}"
        )));
    }
    let fwd = (prev + n_total - curr) % n_total;
    let bwd = (curr + n_total - prev) % n_total;
    Ok(fwd.min(bwd))
}

/// Mean absolute first difference of best-beam index sequences with circular
/// wrap-around: each receiver's differences are averaged over its own
/// transitions first, then the per-receiver means are averaged.
pub fn mafd(sequences: &[Vec<usize>], n_total: usize) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::InvalidInput("no sequences".into()));
    }
    let mut acc = 0.0;
    for seq in sequences {
        if seq.len() < 2 {
            return Err(Error::InvalidInput(
                "sequence shorter than 2 has no first difference".into(),
            ));
        }
        let mut sum = 0usize;
        for w in seq.windows(2) {
            sum += circular_diff(w[0], w[1], n_total)?;
        }
        acc += sum as f64 / (seq.len() - 1) as f64;
    }
    Ok(acc / sequences.len() as f64)
}

/// Measurement overhead reduction in percent: `(1 - n_measured / n_full) * 100`.
pub fn mor(n_measured: usize, n_full: usize) -> Result<f64> {
    if n_full == 0 {
        return Err(Error::InvalidInput("n_full must be positive".into()));
    }
    if n_measured > n_full {
        return Err(Error::InvalidInput(format!(
            "n_measured {n_measured} exceeds n_full {n_full}"
        )));
    }
    Ok((1.0 - n_measured as f64 / n_full as f64) * 100.0)
}
