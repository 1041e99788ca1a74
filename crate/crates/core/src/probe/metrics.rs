use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;

fn class_counts(labels: &[u8]) -> Result<[usize; 2]> {
    let mut counts = [0usize; 2];
    for &l in labels {
        if l > 1 {
            return Err(Error::invalid("label", format!("{l} not in {{0, 1}}")));
        }
        counts[usize::from(l)] += 1;
    }
    Ok(counts)
}

/// Mann-Whitney statistic: the share of (positive, negative) pairs where the
/// positive scores higher, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auc", format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let counts = class_counts(labels)?;
    if counts.contains(&0) {
        return Err(Error::degenerate("auc", "only one class present"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { op: "auc" });
    }
    // Rank-sum form with midranks for ties; exact for these sizes.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (n_neg, n_pos) = (counts[0] as f64, counts[1] as f64);
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Share of predictions equal to the label.
pub fn accuracy(predicted: &[u8], labels: &[u8]) -> Result<f64> {
    if predicted.len() != labels.len() || labels.is_empty() {
        return Err(Error::shape("accuracy", format!("{} predictions for {} labels", predicted.len(), labels.len())));
    }
    Ok(predicted.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}

/// Stratified `k`-fold assignment: each class is shuffled and dealt round
/// robin, continuing across classes so fold sizes differ by at most one.
/// Returns the test indices of each fold, sorted.
pub fn stratified_folds(labels: &[u8], k: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("folds", format!("{k} < 2")));
    }
    let counts = class_counts(labels)?;
    if counts.iter().any(|&c| c < k) {
        return Err(Error::degenerate("stratified folds", format!("class counts {counts:?} below {k} folds")));
    }
    let mut folds = alloc::vec![Vec::new(); k];
    let mut next = 0;
    for class in 0..2u8 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for m in members {
            folds[next].push(m);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Complement of `fold` in `0..n`.
pub fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| fold.binary_search(i).is_err()).collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}
