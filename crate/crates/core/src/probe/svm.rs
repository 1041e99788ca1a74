use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    /// `w . x + b`; positive means class 1.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }
}

fn objective(w: &[f64], b: f64, x: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &yi)| (1.0 - yi * (w.iter().zip(r).map(|(a, v)| a * v).sum::<f64>() + b)).max(0.0))
        .sum();
    reg + c * hinge
}

/// Minimizes `0.5 |w|^2 + c * sum hinge(1 - y (w.x + b))` with labels mapped
/// to `-1/+1`, by full-batch subgradient descent with step `1/t`. The
/// iterate with the lowest objective is returned.
pub fn train_linear_svm(x: &[Vec<f64>], labels: &[u8], c: f64, iters: usize) -> Result<LinearSvm> {
    if x.len() != labels.len() || x.is_empty() {
        return Err(Error::shape("svm", format!("{} rows for {} labels", x.len(), labels.len())));
    }
    if !(c > 0.0 && c.is_finite()) || iters == 0 {
        return Err(Error::invalid("svm", format!("C = {c} and iters = {iters} must be positive")));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::shape("svm", "rows must share a width and be finite"));
    }
    if labels.iter().any(|&l| l > 1) || !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::degenerate("svm", "both classes 0 and 1 are required"));
    }
    if x.iter().all(|r| r == &x[0]) {
        return Err(Error::degenerate("svm", "all feature rows are identical"));
    }
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (objective(&w, b, x, &y, c), w.clone(), b);
    let mut gw = vec![0.0; d];
    for t in 1..=iters {
        gw.copy_from_slice(&w);
        let mut gb = 0.0;
        for (r, &yi) in x.iter().zip(&y) {
            let margin = yi * (w.iter().zip(r).map(|(a, v)| a * v).sum::<f64>() + b);
            if margin < 1.0 {
                for (g, v) in gw.iter_mut().zip(r) {
                    *g -= c * yi * v;
                }
                gb -= c * yi;
            }
        }
        let step = 1.0 / t as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
        let obj = objective(&w, b, x, &y, c);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    Ok(LinearSvm { weights: best.1, bias: best.2 })
}

/// Feature index to ROI for `P x C` matrices flattened row-major.
pub fn roi_layout(parcels: usize, channels: usize) -> Vec<usize> {
    (0..parcels * channels).map(|i| i / channels).collect()
}

/// Per-ROI sum of the positive SVM weights.
pub fn svm_feature_importance(weights: &[f64], layout: &[usize]) -> Result<Vec<f64>> {
    if weights.len() != layout.len() {
        return Err(Error::shape("feature importance", format!("{} weights, {} layout entries", weights.len(), layout.len())));
    }
    let rois = layout.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![0.0; rois];
    for (&w, &roi) in weights.iter().zip(layout) {
        out[roi] += w.max(0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<u8>) {
        (vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]], vec![0, 0, 1, 1])
    }

    #[test]
    fn separable_toy() {
        let (x, y) = toy();
        let svm = train_linear_svm(&x, &y, 1.0, 500).unwrap();
        assert!(svm.weights[0] > 0.0);
        assert!(x.iter().zip(&y).all(|(r, &l)| svm.predict(r) == l));
    }

    #[test]
    fn identical_rows_rejected() {
        assert!(train_linear_svm(&[vec![1.0], vec![1.0]], &[0, 1], 1.0, 10).is_err());
        assert!(train_linear_svm(&[vec![1.0], vec![2.0]], &[1, 1], 1.0, 10).is_err());
    }

    #[test]
    fn importance_examples() {
        assert_eq!(svm_feature_importance(&[0.5, -0.2, 0.1], &[0, 1, 2]).unwrap(), vec![0.5, 0.0, 0.1]);
        assert_eq!(svm_feature_importance(&[-0.5, -0.2], &[0, 1]).unwrap(), vec![0.0, 0.0]);
        let imp = svm_feature_importance(&[0.2, 0.3, -1.0, 0.0], &roi_layout(2, 2)).unwrap();
        assert!((imp[0] - 0.5).abs() < 1e-15 && imp[1] == 0.0);
        assert!(svm_feature_importance(&[0.2], &[0, 1]).is_err());
    }
}
