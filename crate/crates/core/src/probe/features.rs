use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{sample_subsequences, BrainGraph, Dataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{derive, seeded};
use crate::stgcn::{extract, InputBatch, ModelParams};

const STREAM_EXTRACT: u64 = 0x30;

/// Window plan for zero-shot extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractConfig {
    pub window: usize,
    pub windows_per_subject: usize,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { window: 64, windows_per_subject: 8, seed: 0 }
    }
}

/// Per-subject `P x c3` feature matrices from a frozen extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroShotFeatures {
    pub subject_ids: Vec<String>,
    pub matrices: Vec<Tensor>,
    pub labels: Option<Vec<u8>>,
}

impl ZeroShotFeatures {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// `(P, c3)`.
    pub fn matrix_shape(&self) -> (usize, usize) {
        let s = self.matrices[0].shape();
        (s[0], s[1])
    }

    /// Row-major flattening of every matrix, one row per subject.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrices.iter().map(|m| m.data().to_vec()).collect()
    }
}

/// For each subject: its graph, `windows_per_subject` seeded windows through
/// the extractor, then the mean over windows and time.
pub fn extract_features(model: &ModelParams, dataset: &Dataset, config: &ExtractConfig) -> Result<ZeroShotFeatures> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset", "no subjects"));
    }
    let mut matrices = Vec::with_capacity(dataset.len());
    for (s, record) in dataset.records().iter().enumerate() {
        let graph = BrainGraph::from_timeseries(&record.timeseries)?;
        let mut rng = seeded(derive(derive(config.seed, STREAM_EXTRACT), s as u64));
        let windows = sample_subsequences(record, s, config.window, config.windows_per_subject, &mut rng)?;
        let w: Vec<&Tensor> = windows.iter().map(|w| &w.values).collect();
        let g: Vec<&Tensor> = core::iter::repeat_n(&graph.normalized, w.len()).collect();
        let out = extract(&InputBatch::new(&w, &g)?, &model.extractor)?;
        let (r, p, l, c) = (out.shape()[0], out.shape()[1], out.shape()[2], out.shape()[3]);
        let mut m = alloc::vec![0.0; p * c];
        for ri in 0..r {
            for pi in 0..p {
                for li in 0..l {
                    let base = ((ri * p + pi) * l + li) * c;
                    for (ci, v) in out.data()[base..base + c].iter().enumerate() {
                        m[pi * c + ci] += v;
                    }
                }
            }
        }
        let denom = (r * l) as f64;
        m.iter_mut().for_each(|v| *v /= denom);
        matrices.push(Tensor::new(&[p, c], m)?);
    }
    Ok(ZeroShotFeatures {
        subject_ids: dataset.records().iter().map(|r| r.subject_id.clone()).collect(),
        matrices,
        labels: dataset.labels(),
    })
}
