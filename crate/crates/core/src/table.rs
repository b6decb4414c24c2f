use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse observed counts over the non-negative integers.
///
/// Only strictly positive counts are stored; an absent key is an empty cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    counts: BTreeMap<u64, u64>,
    n: u64,
}

impl FrequencyTable {
    /// Builds a table from `(x, count)` records. Zero counts are rejected, as
    /// are repeated support points.
    pub fn from_counts<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut counts = BTreeMap::new();
        let mut n = 0u64;
        for (x, c) in records {
            if c == 0 {
                return Err(Error::NonPositiveCount { x, count: 0 });
            }
            if counts.insert(x, c).is_some() {
                return Err(Error::DuplicateSupportPoint(x));
            }
            n += c;
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { counts, n })
    }

    /// Aggregates raw observations.
    pub fn from_observations(obs: &[u64]) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut counts = BTreeMap::new();
        for &x in obs {
            *counts.entry(x).or_insert(0u64) += 1;
        }
        Ok(Self { counts, n: obs.len() as u64 })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, x: u64) -> u64 {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    /// `r_n(x) = count(x) / n`.
    pub fn relative(&self, x: u64) -> f64 {
        self.count(x) as f64 / self.n as f64
    }

    /// Non-empty cells in increasing order of `x`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&x, &c)| (x, c))
    }

    /// Non-empty cells with their relative frequencies.
    pub fn relative_iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        let n = self.n as f64;
        self.counts.iter().map(move |(&x, &c)| (x, c as f64 / n))
    }

    pub fn num_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn max_support(&self) -> u64 {
        *self.counts.keys().next_back().expect("table is never empty")
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.iter().map(|(x, c)| x as f64 * c as f64).sum();
        s / self.n as f64
    }

    /// Lower median of the observations.
    pub fn median(&self) -> f64 {
        let half = self.n.div_ceil(2);
        let mut acc = 0;
        for (x, c) in self.iter() {
            acc += c;
            if acc >= half {
                return x as f64;
            }
        }
        self.max_support() as f64
    }

    /// True if some `x` in `0..=x_max` has no observations.
    pub fn has_empty_cell_up_to(&self, x_max: u64) -> bool {
        let covered = self.counts.range(..=x_max).count() as u64;
        covered < x_max + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_frequencies_sum_to_one() {
        let t = FrequencyTable::from_counts([(0, 23), (1, 7), (2, 3), (91, 1)]).unwrap();
        assert_eq!(t.n(), 34);
        let s: f64 = t.relative_iter().map(|(_, r)| r).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(t.relative(5), 0.0);
        assert_eq!(t.max_support(), 91);
        assert!((t.mean() - 104.0 / 34.0).abs() < 1e-15);
        assert_eq!(t.median(), 0.0);
    }

    #[test]
    fn rejects_invalid_records() {
        assert!(matches!(
            FrequencyTable::from_counts([(0, 2), (0, 3)]),
            Err(Error::DuplicateSupportPoint(0))
        ));
        assert!(matches!(
            FrequencyTable::from_counts([(4, 0)]),
            Err(Error::NonPositiveCount { x: 4, .. })
        ));
        assert!(matches!(FrequencyTable::from_counts([]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn empty_cell_detection() {
        let t = FrequencyTable::from_observations(&[0, 1, 1, 2, 4]).unwrap();
        assert!(!t.has_empty_cell_up_to(2));
        assert!(t.has_empty_cell_up_to(3));
        assert!(t.has_empty_cell_up_to(10));
    }
}
