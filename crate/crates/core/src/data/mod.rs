//! Subject records, functional-connectivity graphs, sub-sequence sampling
//! and the synthetic cohort generator.

mod graph;
mod subseq;
mod synth;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use graph::{normalize_adjacency, pearson_adjacency, BrainGraph};
pub use subseq::{sample_subsequences, SubSequence};
pub use synth::{generate_synthetic, SynthSpec};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Minimum time points a record must carry.
pub const MIN_TIME_POINTS: usize = 8;

/// One subject: a `P x T` regional time-series matrix and an optional
/// binary class label.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub timeseries: Tensor,
    pub label: Option<u8>,
}

impl SubjectRecord {
    pub fn new(subject_id: impl Into<String>, timeseries: Tensor, label: Option<u8>) -> Result<Self> {
        let subject_id = subject_id.into();
        if timeseries.ndim() != 2 {
            return Err(Error::shape("SubjectRecord", format!("{subject_id}: time series must be P x T")));
        }
        let (p, t) = (timeseries.shape()[0], timeseries.shape()[1]);
        if p < 2 || t < MIN_TIME_POINTS {
            return Err(Error::invalid(
                "subject record",
                format!("{subject_id}: need P >= 2 and T >= {MIN_TIME_POINTS}, got {p} x {t}"),
            ));
        }
        if let Some(l) = label {
            if l > 1 {
                return Err(Error::invalid("label", format!("{subject_id}: {l} not in {{0, 1}}")));
            }
        }
        Ok(SubjectRecord { subject_id, timeseries, label })
    }

    pub fn parcels(&self) -> usize {
        self.timeseries.shape()[0]
    }

    pub fn time_points(&self) -> usize {
        self.timeseries.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// A cohort from one domain. Either every record is labeled or none is,
/// and all records share the parcel count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    domain: Domain,
    class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(records: Vec<SubjectRecord>, domain: Domain) -> Result<Self> {
        if let Some(first) = records.first() {
            let p = first.parcels();
            if let Some(bad) = records.iter().find(|r| r.parcels() != p) {
                return Err(Error::invalid(
                    "dataset",
                    format!("inconsistent parcel count: {} has {}, {} has {p}", bad.subject_id, bad.parcels(), first.subject_id),
                ));
            }
            let labeled = first.label.is_some();
            if let Some(bad) = records.iter().find(|r| r.label.is_some() != labeled) {
                return Err(Error::invalid("dataset", format!("{} breaks all-or-none labeling", bad.subject_id)));
            }
        }
        Ok(Dataset { records, domain, class_names: None })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn parcels(&self) -> Option<usize> {
        self.records.first().map(SubjectRecord::parcels)
    }

    pub fn is_labeled(&self) -> bool {
        self.records.first().is_some_and(|r| r.label.is_some())
    }

    /// Labels of every record, or `None` for an unlabeled cohort.
    pub fn labels(&self) -> Option<Vec<u8>> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            domain: self.domain,
            class_names: self.class_names.clone(),
        }
    }

    /// Shortest time series in the cohort.
    pub fn min_time_points(&self) -> Option<usize> {
        self.records.iter().map(SubjectRecord::time_points).min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, p: usize, label: Option<u8>) -> SubjectRecord {
        let data = (0..p * 8).map(|i| i as f64).collect();
        SubjectRecord::new(id, Tensor::new(&[p, 8], data).unwrap(), label).unwrap()
    }

    #[test]
    fn inconsistent_parcels_rejected() {
        let err = Dataset::new(alloc::vec![rec("a", 4, None), rec("b", 5, None)], Domain::Source).unwrap_err();
        assert!(format!("{err}").contains("inconsistent parcel count"));
    }

    #[test]
    fn partial_labels_rejected() {
        assert!(Dataset::new(alloc::vec![rec("a", 4, Some(1)), rec("b", 4, None)], Domain::Target).is_err());
    }

    #[test]
    fn record_bounds() {
        assert!(SubjectRecord::new("x", Tensor::zeros(&[1, 8]), None).is_err());
        assert!(SubjectRecord::new("x", Tensor::zeros(&[2, 7]), None).is_err());
        assert!(SubjectRecord::new("x", Tensor::zeros(&[2, 8]), Some(2)).is_err());
    }
}
