use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

/// Per-query event counters.
///
/// Every step a search takes through the storage layer bumps exactly one of
/// these. Counters never decrease within a query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventLedger {
    pub page_access: u64,
    pub tuple_materialize: u64,
    pub translation_lookup: u64,
    pub filter_check: u64,
    pub distance_computation: u64,
    pub hop: u64,
    pub leaf_scanned: u64,
    pub reorder_fetch: u64,
}

impl EventLedger {
    pub const FIELDS: [&'static str; 8] = [
        "page_access",
        "tuple_materialize",
        "translation_lookup",
        "filter_check",
        "distance_computation",
        "hop",
        "leaf_scanned",
        "reorder_fetch",
    ];

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn counts(&self) -> [u64; 8] {
        [
            self.page_access,
            self.tuple_materialize,
            self.translation_lookup,
            self.filter_check,
            self.distance_computation,
            self.hop,
            self.leaf_scanned,
            self.reorder_fetch,
        ]
    }

    /// Field-wise difference `self - earlier`; `earlier` must be a prefix snapshot.
    pub fn since(&self, earlier: &EventLedger) -> EventLedger {
        let a = self.counts();
        let b = earlier.counts();
        let d: Vec<u64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        EventLedger {
            page_access: d[0],
            tuple_materialize: d[1],
            translation_lookup: d[2],
            filter_check: d[3],
            distance_computation: d[4],
            hop: d[5],
            leaf_scanned: d[6],
            reorder_fetch: d[7],
        }
    }
}

impl AddAssign<&EventLedger> for EventLedger {
    fn add_assign(&mut self, o: &EventLedger) {
        self.page_access += o.page_access;
        self.tuple_materialize += o.tuple_materialize;
        self.translation_lookup += o.translation_lookup;
        self.filter_check += o.filter_check;
        self.distance_computation += o.distance_computation;
        self.hop += o.hop;
        self.leaf_scanned += o.leaf_scanned;
        self.reorder_fetch += o.reorder_fetch;
    }
}

impl<'a> std::iter::Sum<&'a EventLedger> for EventLedger {
    fn sum<I: Iterator<Item = &'a EventLedger>>(iter: I) -> Self {
        let mut acc = EventLedger::default();
        for l in iter {
            acc += l;
        }
        acc
    }
}

/// Abstract cost per event, in cycle-like units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub page_access: u64,
    pub tuple_materialize: u64,
    pub translation_lookup: u64,
    pub filter_check: u64,
    pub distance_computation: u64,
    pub hop: u64,
    pub leaf_scanned: u64,
    pub reorder_fetch: u64,
}

impl CostWeights {
    /// Default proxies; the per-vector costs scale with dimensionality.
    pub fn for_dim(dim: usize) -> Self {
        let dim = dim as u64;
        Self {
            page_access: 1000,
            tuple_materialize: 4 * dim,
            translation_lookup: 20,
            filter_check: 5,
            distance_computation: 2 * dim,
            hop: 0,
            leaf_scanned: 0,
            reorder_fetch: 1000,
        }
    }

    pub fn zero() -> Self {
        Self::from_array([0; 8])
    }

    pub fn as_array(&self) -> [u64; 8] {
        [
            self.page_access,
            self.tuple_materialize,
            self.translation_lookup,
            self.filter_check,
            self.distance_computation,
            self.hop,
            self.leaf_scanned,
            self.reorder_fetch,
        ]
    }

    pub fn from_array(w: [u64; 8]) -> Self {
        Self {
            page_access: w[0],
            tuple_materialize: w[1],
            translation_lookup: w[2],
            filter_check: w[3],
            distance_computation: w[4],
            hop: w[5],
            leaf_scanned: w[6],
            reorder_fetch: w[7],
        }
    }
}

/// Weighted cost per counter, in [`EventLedger::FIELDS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub shares: [u64; 8],
    pub total: u64,
}

impl Breakdown {
    /// Shares as fractions of the total; all zero when the total is zero.
    pub fn fractions(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        if self.total > 0 {
            for (o, s) in out.iter_mut().zip(self.shares) {
                *o = s as f64 / self.total as f64;
            }
        }
        out
    }
}

pub fn weighted_breakdown(ledger: &EventLedger, weights: &CostWeights) -> Breakdown {
    let mut shares = [0u64; 8];
    for ((s, c), w) in shares.iter_mut().zip(ledger.counts()).zip(weights.as_array()) {
        *s = c * w;
    }
    Breakdown {
        shares,
        total: shares.iter().sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_ledger_costs_nothing() {
        let b = weighted_breakdown(&EventLedger::default(), &CostWeights::for_dim(128));
        assert_eq!(b.total, 0);
        assert_eq!(b.fractions(), [0.0; 8]);
    }

    #[test]
    fn two_counter_example() {
        let ledger = EventLedger {
            page_access: 2,
            distance_computation: 3,
            ..Default::default()
        };
        let w = CostWeights {
            page_access: 1000,
            distance_computation: 10,
            ..CostWeights::zero()
        };
        let b = weighted_breakdown(&ledger, &w);
        assert_eq!(b.total, 2030);
        assert_eq!(b.shares[0], 2000);
        assert_eq!(b.shares[4], 30);
    }

    fn ledger_strategy() -> impl Strategy<Value = EventLedger> {
        proptest::array::uniform8(0u64..1_000_000).prop_map(|c| EventLedger {
            page_access: c[0],
            tuple_materialize: c[1],
            translation_lookup: c[2],
            filter_check: c[3],
            distance_computation: c[4],
            hop: c[5],
            leaf_scanned: c[6],
            reorder_fetch: c[7],
        })
    }

    proptest! {
        #[test]
        fn shares_sum_to_total(l in ledger_strategy(), w in proptest::array::uniform8(0u64..10_000)) {
            let b = weighted_breakdown(&l, &CostWeights::from_array(w));
            prop_assert_eq!(b.shares.iter().sum::<u64>(), b.total);
            if b.total > 0 {
                let s: f64 = b.fractions().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn zeroing_a_weight_removes_its_share(l in ledger_strategy(), w in proptest::array::uniform8(0u64..10_000), i in 0usize..8) {
            let full = weighted_breakdown(&l, &CostWeights::from_array(w));
            let mut w2 = w;
            w2[i] = 0;
            let cut = weighted_breakdown(&l, &CostWeights::from_array(w2));
            prop_assert_eq!(full.total - cut.total, full.shares[i]);
            prop_assert_eq!(cut.shares[i], 0);
        }
    }
}
