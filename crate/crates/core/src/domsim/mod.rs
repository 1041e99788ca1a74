//! Domain similarity between two feature sets: histograms over shared bins,
//! the exact earth mover's distance between them, and `exp(-gamma * EMD)`.

mod transport;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use transport::{solve_transport, TransportPlan};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DEFAULT_BINS: usize = 32;
pub const DEFAULT_GAMMA: f64 = 0.01;

/// Mass tolerance on histogram totals.
const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHistogram {
    /// `B + 1` ascending edges.
    pub bin_edges: Vec<f64>,
    /// `B` masses summing to one.
    pub masses: Vec<f64>,
    /// Mean value per bin; the bin midpoint when the bin is empty.
    pub bin_means: Vec<f64>,
    /// Set when every pooled value was identical and one bin was used.
    pub degenerate: bool,
}

impl FeatureHistogram {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }
}

/// Element-wise mean over subjects of equally shaped feature matrices,
/// flattened row-major.
pub fn mean_flatten_features(features: &[Tensor]) -> Result<Vec<f64>> {
    let first = features.first().ok_or_else(|| Error::invalid("features", "no subjects"))?;
    let mut sum = vec![0.0; first.len()];
    for f in features {
        if f.shape() != first.shape() {
            return Err(Error::shape("mean_flatten_features", format!("{:?} vs {:?}", f.shape(), first.shape())));
        }
        for (s, v) in sum.iter_mut().zip(f.data()) {
            *s += v;
        }
    }
    let n = features.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Histograms of `x_s` and `x_t` over `bins` equal-width bins spanning the
/// pooled range. Masses are counts divided by the vector length.
pub fn build_histograms(x_s: &[f64], x_t: &[f64], bins: usize) -> Result<(FeatureHistogram, FeatureHistogram)> {
    if bins == 0 {
        return Err(Error::invalid("bins", "need at least one bin"));
    }
    if x_s.is_empty() || x_t.is_empty() {
        return Err(Error::invalid("histogram input", "empty feature vector"));
    }
    if x_s.iter().chain(x_t).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "build_histograms" });
    }
    let lo = x_s.iter().chain(x_t).copied().fold(f64::INFINITY, f64::min);
    let hi = x_s.iter().chain(x_t).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        let single = FeatureHistogram { bin_edges: vec![lo, hi], masses: vec![1.0], bin_means: vec![lo], degenerate: true };
        return Ok((single.clone(), single));
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    edges[bins] = hi;
    let one = |x: &[f64]| {
        let mut counts = vec![0usize; bins];
        let mut sums = vec![0.0; bins];
        for &v in x {
            let mut b = (((v - lo) / width) as usize).min(bins - 1);
            // Keep each value inside its edges despite rounding of `width`.
            while b > 0 && v < edges[b] {
                b -= 1;
            }
            while b + 1 < bins && v >= edges[b + 1] {
                b += 1;
            }
            counts[b] += 1;
            sums[b] += v;
        }
        let n = x.len() as f64;
        let masses = counts.iter().map(|&c| c as f64 / n).collect();
        let bin_means = (0..bins)
            .map(|b| {
                if counts[b] == 0 {
                    (edges[b] + edges[b + 1]) / 2.0
                } else {
                    (sums[b] / counts[b] as f64).clamp(edges[b], edges[b + 1])
                }
            })
            .collect();
        FeatureHistogram { bin_edges: edges.clone(), masses, bin_means, degenerate: false }
    };
    Ok((one(x_s), one(x_t)))
}

fn check_mass(h: &FeatureHistogram, which: &'static str) -> Result<()> {
    let total: f64 = h.masses.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE || h.masses.iter().any(|&m| m < 0.0 || !m.is_finite()) {
        return Err(Error::invalid(which, format!("masses sum to {total}, expected 1")));
    }
    if h.bin_means.len() != h.masses.len() {
        return Err(Error::shape("histogram", format!("{} means for {} masses", h.bin_means.len(), h.masses.len())));
    }
    Ok(())
}

/// Optimal transport between the non-empty bins of two histograms with cost
/// `|mean_s[i] - mean_t[j]|`. The flow is reported over all bins.
pub fn emd_plan(h_s: &FeatureHistogram, h_t: &FeatureHistogram) -> Result<TransportPlan> {
    check_mass(h_s, "source histogram")?;
    check_mass(h_t, "target histogram")?;
    let rows: Vec<usize> = (0..h_s.bins()).filter(|&i| h_s.masses[i] > 0.0).collect();
    let cols: Vec<usize> = (0..h_t.bins()).filter(|&j| h_t.masses[j] > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| h_s.masses[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| h_t.masses[j]).collect();
    let cost: Vec<f64> =
        rows.iter().flat_map(|&i| cols.iter().map(move |&j| (h_s.bin_means[i] - h_t.bin_means[j]).abs())).collect();
    let compact = solve_transport(&supply, &demand, &cost)?;
    let mut flow = vec![0.0; h_s.bins() * h_t.bins()];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            flow[i * h_t.bins() + j] = compact.flow[a * cols.len() + b];
        }
    }
    Ok(TransportPlan { cost: compact.cost, flow, rows: h_s.bins(), cols: h_t.bins() })
}

/// Earth mover's distance between two histograms.
pub fn emd(h_s: &FeatureHistogram, h_t: &FeatureHistogram) -> Result<f64> {
    Ok(emd_plan(h_s, h_t)?.cost)
}

/// `exp(-gamma * emd)`.
pub fn similarity_from_emd(emd: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("{gamma} must be > 0")));
    }
    if emd.is_nan() || emd < 0.0 {
        return Err(Error::invalid("emd", format!("{emd} must be >= 0")));
    }
    Ok(libm::exp(-gamma * emd))
}

pub fn domain_similarity(h_s: &FeatureHistogram, h_t: &FeatureHistogram, gamma: f64) -> Result<f64> {
    similarity_from_emd(emd(h_s, h_t)?, gamma)
}
