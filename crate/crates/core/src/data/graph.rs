use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Functional-connectivity graph of one subject.
///
/// `adjacency` holds absolute Pearson correlations with a zero diagonal;
/// `normalized` is `D^-1/2 (A + I) D^-1/2` with `D_ii = sum_j A_ij + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainGraph {
    pub adjacency: Tensor,
    pub normalized: Tensor,
    /// Parcels whose series had zero variance; their edges are all zero.
    pub degenerate_rows: Vec<usize>,
}

impl BrainGraph {
    pub fn from_timeseries(ts: &Tensor) -> Result<Self> {
        let (adjacency, degenerate_rows) = pearson_adjacency(ts)?;
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(BrainGraph { adjacency, normalized, degenerate_rows })
    }

    /// Graph with no edges; its normalized matrix is the identity.
    pub fn isolated(parcels: usize) -> Self {
        BrainGraph {
            adjacency: Tensor::zeros(&[parcels, parcels]),
            normalized: Tensor::identity(parcels),
            degenerate_rows: Vec::new(),
        }
    }

    pub fn parcels(&self) -> usize {
        self.adjacency.shape()[0]
    }
}

/// `|corr(row_i, row_j)|` for `i != j`, zero on the diagonal.
///
/// Rows with zero variance correlate with nothing and are reported in the
/// second return value.
pub fn pearson_adjacency(ts: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    if ts.ndim() != 2 {
        return Err(Error::shape("pearson_adjacency", format!("expected P x T, got {:?}", ts.shape())));
    }
    let (p, t) = (ts.shape()[0], ts.shape()[1]);
    if t < 2 {
        return Err(Error::invalid("time series", format!("need T >= 2 for correlation, got {t}")));
    }
    let mut centered = vec![0.0; p * t];
    let mut scale = vec![0.0; p];
    let mut degenerate = Vec::new();
    for i in 0..p {
        let row = ts.row(i);
        let mean = row.iter().sum::<f64>() / t as f64;
        let peak = row.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        let dst = &mut centered[i * t..(i + 1) * t];
        for (d, v) in dst.iter_mut().zip(row) {
            *d = v - mean;
        }
        let ss: f64 = dst.iter().map(|v| v * v).sum();
        let sd = libm::sqrt(ss);
        if sd <= 1e-12 * (1.0 + peak) * libm::sqrt(t as f64) {
            degenerate.push(i);
        } else {
            scale[i] = sd;
        }
    }
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        if scale[i] == 0.0 {
            continue;
        }
        for j in i + 1..p {
            if scale[j] == 0.0 {
                continue;
            }
            let dot: f64 = centered[i * t..(i + 1) * t].iter().zip(&centered[j * t..(j + 1) * t]).map(|(x, y)| x * y).sum();
            let r = f64::min(1.0, libm::fabs(dot / (scale[i] * scale[j])));
            a[i * p + j] = r;
            a[j * p + i] = r;
        }
    }
    Ok((Tensor::from_parts(vec![p, p], a), degenerate))
}

/// `D^-1/2 (A + I) D^-1/2` with `D_ii = sum_j A_ij + 1`.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || a.shape()[0] != a.shape()[1] {
        return Err(Error::shape("normalize_adjacency", format!("{:?} is not square", a.shape())));
    }
    let p = a.shape()[0];
    for i in 0..p {
        for j in 0..p {
            let v = a.at2(i, j);
            if v < 0.0 {
                return Err(Error::invalid("adjacency", format!("negative entry {v} at ({i}, {j})")));
            }
            if libm::fabs(v - a.at2(j, i)) > 1e-9 {
                return Err(Error::invalid("adjacency", format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    let inv_sqrt_deg: Vec<f64> = (0..p).map(|i| 1.0 / libm::sqrt(a.row(i).iter().sum::<f64>() + 1.0)).collect();
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let aij = a.at2(i, j) + if i == j { 1.0 } else { 0.0 };
            out[i * p + j] = inv_sqrt_deg[i] * aij * inv_sqrt_deg[j];
        }
    }
    Ok(Tensor::from_parts(vec![p, p], out))
}
