use serde::{Deserialize, Serialize};

use crate::dataset::RowId;
use crate::error::{Error, Result};

/// Set of rows that satisfy a query's structured predicate.
///
/// Checking a candidate during a search is a single probe into this set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterBitmap {
    universe: usize,
    words: Vec<u64>,
    cardinality: usize,
}

/// A run of consecutive rowids `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub start: RowId,
    pub len: u32,
}

impl FilterBitmap {
    pub fn empty(universe: usize) -> Self {
        Self {
            universe,
            words: vec![0; universe.div_ceil(64)],
            cardinality: 0,
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut b = Self::empty(universe);
        for w in &mut b.words {
            *w = u64::MAX;
        }
        if !universe.is_multiple_of(64) {
            if let Some(last) = b.words.last_mut() {
                *last = (1u64 << (universe % 64)) - 1;
            }
        }
        b.cardinality = universe;
        b
    }

    /// Builds a bitmap from rowids; out-of-range ids panic.
    pub fn from_rowids(universe: usize, ids: impl IntoIterator<Item = RowId>) -> Self {
        let mut b = Self::empty(universe);
        for id in ids {
            b.insert(id);
        }
        b
    }

    pub fn insert(&mut self, rowid: RowId) -> bool {
        let i = rowid as usize;
        assert!(i < self.universe, "rowid {i} outside universe {}", self.universe);
        let (w, bit) = (i / 64, 1u64 << (i % 64));
        let fresh = self.words[w] & bit == 0;
        if fresh {
            self.words[w] |= bit;
            self.cardinality += 1;
        }
        fresh
    }

    #[inline]
    pub fn probe(&self, rowid: RowId) -> bool {
        let i = rowid as usize;
        i < self.universe && self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn selectivity(&self) -> f64 {
        if self.universe == 0 {
            0.0
        } else {
            self.cardinality as f64 / self.universe as f64
        }
    }

    /// Set rowids in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = RowId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros();
                bits &= bits - 1;
                Some((wi * 64 + tz as usize) as RowId)
            })
        })
    }

    pub fn is_subset(&self, other: &FilterBitmap) -> bool {
        self.words
            .iter()
            .zip(other.words.iter().chain(std::iter::repeat(&0)))
            .all(|(a, b)| a & !b == 0)
    }

    pub fn to_runs(&self) -> Vec<Run> {
        let mut runs: Vec<Run> = Vec::new();
        for id in self.iter() {
            match runs.last_mut() {
                Some(r) if r.start + r.len == id => r.len += 1,
                _ => runs.push(Run { start: id, len: 1 }),
            }
        }
        runs
    }

    pub fn from_runs(universe: usize, runs: &[Run]) -> Result<Self> {
        let mut b = Self::empty(universe);
        let mut prev_end: Option<u64> = None;
        for r in runs {
            let end = r.start as u64 + r.len as u64;
            if r.len == 0 || end > universe as u64 {
                return Err(Error::Corrupt(format!("bad run {r:?} for universe {universe}")));
            }
            if prev_end.is_some_and(|p| r.start as u64 <= p) {
                return Err(Error::Corrupt("runs are not sorted and disjoint".into()));
            }
            for id in r.start..r.start + r.len {
                b.insert(id);
            }
            prev_end = Some(end);
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_has_exact_cardinality() {
        for n in [0usize, 1, 63, 64, 65, 130] {
            let b = FilterBitmap::full(n);
            assert_eq!(b.cardinality(), n);
            assert_eq!(b.iter().count(), n);
            assert!(!b.probe(n as RowId));
        }
    }

    #[test]
    fn runs_merge_adjacent_ids() {
        let b = FilterBitmap::from_rowids(20, [1, 2, 3, 7, 9, 10]);
        assert_eq!(
            b.to_runs(),
            vec![
                Run { start: 1, len: 3 },
                Run { start: 7, len: 1 },
                Run { start: 9, len: 2 }
            ]
        );
    }

    #[test]
    fn from_runs_rejects_overlap() {
        let runs = [Run { start: 1, len: 3 }, Run { start: 2, len: 1 }];
        assert!(FilterBitmap::from_runs(10, &runs).is_err());
    }

    proptest! {
        #[test]
        fn cardinality_is_popcount_and_runs_roundtrip(ids in proptest::collection::vec(0u32..500, 0..200)) {
            let b = FilterBitmap::from_rowids(500, ids.iter().copied());
            let mut uniq = ids.clone();
            uniq.sort_unstable();
            uniq.dedup();
            prop_assert_eq!(b.cardinality(), uniq.len());
            prop_assert_eq!(b.iter().collect::<Vec<_>>(), uniq);
            let back = FilterBitmap::from_runs(500, &b.to_runs()).unwrap();
            prop_assert_eq!(back, b);
        }
    }
}
