use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::data::{sample_subsequences, BrainGraph, Dataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::Rng;
use crate::stgcn::InputBatch;

/// A dataset with one normalized graph per subject, built from the full
/// time-series.
#[derive(Debug, Clone)]
pub struct Cohort<'a> {
    pub dataset: &'a Dataset,
    pub graphs: Vec<Tensor>,
}

impl<'a> Cohort<'a> {
    pub fn new(dataset: &'a Dataset) -> Result<Self> {
        let graphs = dataset
            .records()
            .iter()
            .map(|r| BrainGraph::from_timeseries(&r.timeseries).map(|g| g.normalized))
            .collect::<Result<Vec<_>>>()?;
        Ok(Cohort { dataset, graphs })
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn labels(&self) -> Result<Vec<u8>> {
        self.dataset.labels().ok_or(Error::InvalidArgument {
            what: "labels",
            detail: format!("{:?} dataset is unlabeled", self.dataset.domain()),
        })
    }

    /// `count` random windows of `length` for one subject, `[P, L, 1]` each.
    pub fn windows(&self, subject: usize, length: usize, count: usize, rng: &mut Rng) -> Result<Vec<Tensor>> {
        let record = self
            .dataset
            .records()
            .get(subject)
            .ok_or_else(|| Error::invalid("subject index", format!("{subject} of {}", self.len())))?;
        Ok(sample_subsequences(record, subject, length, count, rng)?.into_iter().map(|s| s.values).collect())
    }

    /// One random window per listed subject, with their graphs.
    pub fn batch(&self, subjects: &[usize], length: usize, rng: &mut Rng) -> Result<InputBatch> {
        let mut windows = Vec::with_capacity(subjects.len());
        for &s in subjects {
            windows.extend(self.windows(s, length, 1, rng)?);
        }
        self.assemble(subjects, &windows)
    }

    /// Stacks `windows[i]` with the graph of `subjects[i]`.
    pub fn assemble(&self, subjects: &[usize], windows: &[Tensor]) -> Result<InputBatch> {
        let w: Vec<&Tensor> = windows.iter().collect();
        let g: Vec<&Tensor> = subjects.iter().map(|&s| &self.graphs[s]).collect();
        InputBatch::new(&w, &g)
    }

    /// `min(size, n)` distinct subjects drawn uniformly.
    pub fn random_subjects(&self, size: usize, rng: &mut Rng) -> Vec<usize> {
        let n = self.len();
        let mut picked = index::sample(rng, n, size.min(n)).into_vec();
        picked.sort_unstable();
        picked
    }
}

/// Draws batches with an equal number of subjects from each class, cycling
/// through a reshuffled list of each class.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    pools: [Vec<usize>; 2],
    cursor: [usize; 2],
}

impl BalancedSampler {
    /// `subjects` are cohort indices; `labels` is indexed by cohort index.
    pub fn new(subjects: &[usize], labels: &[u8]) -> Result<Self> {
        let mut pools = [Vec::new(), Vec::new()];
        for &s in subjects {
            let l = *labels.get(s).ok_or_else(|| Error::invalid("subject index", format!("{s}")))?;
            if l > 1 {
                return Err(Error::invalid("label", format!("{l} not in {{0, 1}}")));
            }
            pools[usize::from(l)].push(s);
        }
        if pools.iter().any(Vec::is_empty) {
            return Err(Error::degenerate("class-balanced batch", "a class has no subjects"));
        }
        // Start exhausted so the first draw shuffles.
        let cursor = [pools[0].len(), pools[1].len()];
        Ok(BalancedSampler { pools, cursor })
    }

    pub fn subjects(&self) -> usize {
        self.pools[0].len() + self.pools[1].len()
    }

    /// `size / 2` subjects per class; an odd remainder goes to the larger
    /// class. Returns `(subject, label)` pairs.
    pub fn next_batch(&mut self, size: usize, rng: &mut Rng) -> Vec<(usize, u8)> {
        let half = size / 2;
        let extra = usize::from(self.pools[1].len() > self.pools[0].len());
        let mut take = [half, half];
        take[extra] += size % 2;
        let mut out = Vec::with_capacity(size);
        for class in 0..2 {
            for _ in 0..take[class] {
                if self.cursor[class] == self.pools[class].len() {
                    self.pools[class].shuffle(rng);
                    self.cursor[class] = 0;
                }
                out.push((self.pools[class][self.cursor[class]], class as u8));
                self.cursor[class] += 1;
            }
        }
        out
    }
}
