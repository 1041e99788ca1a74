use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use super::SubjectRecord;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::Rng;

/// A contiguous temporal window of one subject, shaped `P x L x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSequence {
    pub subject_index: usize,
    pub start: usize,
    pub values: Tensor,
}

impl SubSequence {
    pub fn cut(record: &SubjectRecord, subject_index: usize, start: usize, length: usize) -> Result<Self> {
        let (p, t) = (record.parcels(), record.time_points());
        if length == 0 || start + length > t {
            return Err(Error::invalid("sub-sequence", format!("window {start}+{length} exceeds T = {t}")));
        }
        let mut data = Vec::with_capacity(p * length);
        for i in 0..p {
            data.extend_from_slice(&record.timeseries.row(i)[start..start + length]);
        }
        Ok(SubSequence { subject_index, start, values: Tensor::from_parts(alloc::vec![p, length, 1], data) })
    }
}

/// `count` windows of `length` with starts uniform on `[0, T - length]`.
pub fn sample_subsequences(
    record: &SubjectRecord,
    subject_index: usize,
    length: usize,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<SubSequence>> {
    let t = record.time_points();
    if length > t || length == 0 {
        return Err(Error::invalid("sub-sequence length", format!("L = {length} with T = {t}")));
    }
    if count == 0 {
        return Err(Error::invalid("sub-sequence count", "R must be at least 1"));
    }
    (0..count)
        .map(|_| {
            let start = rng.random_range(0..=t - length);
            SubSequence::cut(record, subject_index, start, length)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn record(t: usize) -> SubjectRecord {
        let data = (0..3 * t).map(|i| i as f64 * 0.5).collect();
        SubjectRecord::new("s", Tensor::new(&[3, t], data).unwrap(), None).unwrap()
    }

    #[test]
    fn full_length_forces_zero_start() {
        let subs = sample_subsequences(&record(100), 0, 100, 1, &mut seeded(1)).unwrap();
        assert_eq!(subs[0].start, 0);
        assert_eq!(subs[0].values.shape(), &[3, 100, 1]);
    }

    #[test]
    fn deterministic_and_in_range() {
        let r = record(10);
        let a: Vec<usize> = sample_subsequences(&r, 0, 4, 3, &mut seeded(7)).unwrap().iter().map(|s| s.start).collect();
        let b: Vec<usize> = sample_subsequences(&r, 0, 4, 3, &mut seeded(7)).unwrap().iter().map(|s| s.start).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|&s| s <= 6));
        // Regression fixture pinned from the first run of the seeded stream.
        assert_eq!(a, alloc::vec![0, 1, 1]);
    }

    #[test]
    fn window_longer_than_series_rejected() {
        assert!(sample_subsequences(&record(10), 0, 11, 1, &mut seeded(0)).is_err());
    }

    #[test]
    fn slices_match_source_bitwise() {
        let r = record(20);
        for s in sample_subsequences(&r, 0, 5, 6, &mut seeded(3)).unwrap() {
            for p in 0..3 {
                for l in 0..5 {
                    assert_eq!(s.values.data()[p * 5 + l].to_bits(), r.timeseries.row(p)[s.start + l].to_bits());
                }
            }
        }
    }
}
