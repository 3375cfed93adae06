use std::cmp::Reverse;

use super::{check_args, finish, passes, SearchOutcome};
use crate::bitmap::FilterBitmap;
use crate::dataset::Vector;
use crate::error::Result;
use crate::hnsw::{HnswIndex, SearchState};
use crate::storage::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepingParams {
    pub k: usize,
    pub ef: usize,
    /// Give up after this many nodes have been scored.
    pub max_visited: usize,
}

impl SweepingParams {
    pub fn new(k: usize, ef: usize) -> Self {
        Self {
            k,
            ef,
            max_visited: usize::MAX,
        }
    }
}

/// Traversal-first search: the walk ignores the filter, only the result
/// queue is restricted to passing rows.
pub fn sweeping_search(
    index: &HnswIndex,
    session: &mut Session<'_>,
    q: &Vector,
    bitmap: &FilterBitmap,
    p: SweepingParams,
) -> Result<SearchOutcome> {
    check_args(index, q, p.k, bitmap)?;
    let q = q.as_slice();
    let mut st = SearchState::new(index.len(), p.ef.max(p.k));
    let Some(entry) = index.zoom_in(session, q)? else {
        return Ok(SearchOutcome::default());
    };
    st.visit(entry.cand.ord);
    st.c.push(Reverse(entry.cand));
    if passes(index, bitmap, entry.heaptid, session.ledger_mut()) {
        st.w.push(entry);
    }
    let mut nbrs = Vec::new();
    while let Some(Reverse(c)) = st.c.pop() {
        if st.should_stop(&c) {
            break;
        }
        if st.visited_count() >= p.max_visited {
            break;
        }
        index.expand(session, c.tid, 0, &mut nbrs)?;
        for &n in &nbrs {
            if !st.visit(index.ordinal(n)) {
                continue;
            }
            let w = &st.w;
            let mut to_c = false;
            let s = index.score_node(session, q, n, |c, h, ledger| {
                to_c = w.admits(c);
                to_c && passes(index, bitmap, h, ledger)
            })?;
            if to_c {
                st.c.push(Reverse(s.cand));
            }
            if let Some(a) = s.admitted() {
                st.w.push(a);
            }
        }
    }
    let (neighbors, short) = finish(index, st.w, p.k);
    Ok(SearchOutcome {
        neighbors,
        truncated: short,
        rounds: 1,
        max_expansion_pages: 1,
        trace: Vec::new(),
    })
}
