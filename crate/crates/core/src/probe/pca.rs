use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Principal axes fitted on a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k` unit directions of length `D`, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Share of the total variance along each component.
    pub explained_variance_ratio: Vec<f64>,
}

/// Default component count `min(N - 1, 16)`.
pub fn default_components(n: usize) -> usize {
    n.saturating_sub(1).clamp(1, 16)
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map(Vec::len).ok_or_else(|| Error::invalid("PCA input", "no rows"))?;
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::shape("pca", "rows must share a positive width"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "pca" });
    }
    Ok(d)
}

impl Pca {
    /// Eigendecomposition of the sample covariance. Each component's sign
    /// makes its largest-magnitude loading positive.
    pub fn fit(x: &[Vec<f64>], n_components: usize) -> Result<Self> {
        let d = check_rows(x)?;
        let n = x.len();
        if n_components == 0 || n_components > n.min(d) {
            return Err(Error::invalid("n_components", format!("{n_components} not in 1..={}", n.min(d))));
        }
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
        let denom = (n.max(2) - 1) as f64;
        let cov = (centered.transpose() * &centered) / denom;
        let cov = (&cov + cov.transpose()) * 0.5;
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let mut components = Vec::with_capacity(n_components);
        let mut ratios = Vec::with_capacity(n_components);
        for &k in order.iter().take(n_components) {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let mut lead = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[lead].abs() {
                    lead = i;
                }
            }
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            ratios.push(if total > 0.0 { eig.eigenvalues[k].max(0.0) / total } else { 0.0 });
        }
        Ok(Pca { mean, components, explained_variance_ratio: ratios })
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = check_rows(x)?;
        if d != self.mean.len() {
            return Err(Error::shape("pca transform", format!("width {d}, fitted on {}", self.mean.len())));
        }
        Ok(x
            .iter()
            .map(|r| {
                self.components
                    .iter()
                    .map(|c| c.iter().zip(r.iter().zip(&self.mean)).map(|(w, (v, m))| w * (v - m)).sum())
                    .collect()
            })
            .collect())
    }

    /// Maps projected rows back to the input space.
    pub fn inverse(&self, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        z.iter()
            .map(|r| {
                let mut out = self.mean.clone();
                for (coef, c) in r.iter().zip(&self.components) {
                    for (o, w) in out.iter_mut().zip(c) {
                        *o += coef * w;
                    }
                }
                out
            })
            .collect()
    }
}

/// Fits on `x` and projects it.
pub fn pca_reduce(x: &[Vec<f64>], n_components: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let pca = Pca::fit(x, n_components)?;
    Ok((pca.transform(x)?, pca.explained_variance_ratio))
}

/// Column-wise z-scoring fitted on a training matrix. Constant columns are
/// centered only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let d = check_rows(x)?;
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]) * (r[j] - mean[j])).sum::<f64>() / n;
                let sd = libm::sqrt(var);
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|r| r.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_on_first_axis() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let pca = Pca::fit(&x, 1).unwrap();
        assert!((pca.components[0][0] - 1.0).abs() < 1e-12);
        assert!((pca.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_basis_reconstructs() {
        let x = vec![vec![1.0, 2.0, 0.5], vec![-1.0, 0.3, 2.0], vec![0.2, -0.7, 1.1], vec![3.0, 1.0, -2.0]];
        let pca = Pca::fit(&x, 3).unwrap();
        let back = pca.inverse(&pca.transform(&x).unwrap());
        for (a, b) in x.iter().flatten().zip(back.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_components_rejected() {
        assert!(Pca::fit(&[vec![1.0, 2.0], vec![2.0, 1.0]], 3).is_err());
        assert_eq!(default_components(40), 16);
        assert_eq!(default_components(8), 7);
    }
}
