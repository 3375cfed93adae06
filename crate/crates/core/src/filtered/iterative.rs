use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{check_args, passes, SearchOutcome};
use crate::bitmap::FilterBitmap;
use crate::dataset::Vector;
use crate::error::Result;
use crate::hnsw::{Admitted, Cand, HnswIndex, SearchState};
use crate::storage::{HeapTid, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterativeParams {
    pub k: usize,
    pub ef: usize,
    /// Stop resuming once this many nodes have been scored.
    pub max_scan_tuples: usize,
}

impl IterativeParams {
    /// Uses the default scan cap of `20 * ef`.
    pub fn new(k: usize, ef: usize) -> Self {
        Self {
            k,
            ef,
            max_scan_tuples: 20 * ef.max(k),
        }
    }
}

/// Member of the discarded queue `D`: scored but either pushed out of `W`
/// or never let in.
struct Discarded {
    cand: Cand,
    heaptid: HeapTid,
    copy: Option<Vector>,
}

impl PartialEq for Discarded {
    fn eq(&self, other: &Self) -> bool {
        self.cand == other.cand
    }
}

impl Eq for Discarded {}

impl PartialOrd for Discarded {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Discarded {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cand.cmp(&other.cand)
    }
}

/// Resumable post-filtering. Each round is an unfiltered beam search; its
/// result queue is then filter-checked, and if fewer than `k` rows passed
/// the next round restarts from the best discarded candidates.
pub fn iterative_scan(
    index: &HnswIndex,
    session: &mut Session<'_>,
    q: &Vector,
    bitmap: &FilterBitmap,
    p: IterativeParams,
) -> Result<SearchOutcome> {
    check_args(index, q, p.k, bitmap)?;
    let q = q.as_slice();
    let ef = p.ef.max(p.k);
    let mut st = SearchState::new(index.len(), ef);
    let Some(entry) = index.zoom_in(session, q)? else {
        return Ok(SearchOutcome::default());
    };
    let mut expanded = vec![false; index.len()];
    let mut discarded: BinaryHeap<Reverse<Discarded>> = BinaryHeap::new();
    let mut results: Vec<Admitted> = Vec::new();
    st.visit(entry.cand.ord);
    st.c.push(Reverse(entry.cand));
    st.w.push(entry);

    let mut rounds = 0;
    let mut nbrs = Vec::new();
    loop {
        rounds += 1;
        while let Some(Reverse(c)) = st.c.pop() {
            if st.should_stop(&c) {
                break;
            }
            expanded[c.ord as usize] = true;
            index.expand(session, c.tid, 0, &mut nbrs)?;
            for &n in &nbrs {
                if !st.visit(index.ordinal(n)) {
                    continue;
                }
                let w = &st.w;
                let s = index.score_node(session, q, n, |c, _, _| w.admits(c))?;
                if s.copy.is_none() {
                    discarded.push(Reverse(Discarded {
                        cand: s.cand,
                        heaptid: s.heaptid,
                        copy: None,
                    }));
                    continue;
                }
                let a = s.admitted().expect("kept");
                st.c.push(Reverse(a.cand));
                if let Some(out) = st.w.push(a) {
                    discarded.push(Reverse(Discarded {
                        cand: out.cand,
                        heaptid: out.heaptid,
                        copy: Some(out.copy),
                    }));
                }
            }
        }
        // Every node still in C is also in W or D.
        st.c.clear();
        for a in st.w.drain() {
            if passes(index, bitmap, a.heaptid, session.ledger_mut()) {
                results.push(a);
            }
        }
        if results.len() >= p.k || st.visited_count() >= p.max_scan_tuples || discarded.is_empty() {
            break;
        }
        for _ in 0..ef.min(discarded.len()) {
            let Reverse(d) = discarded.pop().expect("non-empty");
            let copy = match d.copy {
                Some(c) => c,
                None => index
                    .read_node(session, d.cand.tid, None, None, |_, _, _| true)?
                    .copy
                    .expect("kept"),
            };
            if !expanded[d.cand.ord as usize] {
                st.c.push(Reverse(d.cand));
            }
            st.w.push(Admitted {
                cand: d.cand,
                heaptid: d.heaptid,
                copy,
            });
        }
    }
    results.sort();
    let neighbors = index.top_k(results, p.k);
    Ok(SearchOutcome {
        truncated: neighbors.len() < p.k,
        neighbors,
        rounds,
        max_expansion_pages: 1,
        trace: Vec::new(),
    })
}
