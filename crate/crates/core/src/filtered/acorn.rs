use std::cmp::Reverse;

use super::{check_args, finish, passes, resolve_heaptid, SearchOutcome, TranslationMap};
use crate::bitmap::FilterBitmap;
use crate::dataset::Vector;
use crate::error::Result;
use crate::hnsw::{HnswIndex, SearchState};
use crate::storage::{HeapTid, IndexTid, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcornParams {
    pub k: usize,
    pub ef: usize,
    /// Skip the 2-hop expansion through 1-hop neighbors that already pass.
    pub adaptive_skip: bool,
}

impl AcornParams {
    pub fn new(k: usize, ef: usize) -> Self {
        Self {
            k,
            ef,
            adaptive_skip: true,
        }
    }
}

/// Shared per-query pieces of the filter-first strategies.
pub(crate) struct FilterFirst<'a, 'q> {
    pub index: &'a HnswIndex,
    pub bitmap: &'a FilterBitmap,
    pub tm: &'a TranslationMap,
    pub q: &'q [f32],
    pub st: SearchState,
}

impl FilterFirst<'_, '_> {
    /// Scores a node known to pass (separate page read) and offers it to `W`.
    pub fn score_and_offer(&mut self, session: &mut Session<'_>, tid: IndexTid) -> Result<()> {
        let w = &self.st.w;
        let s = self.index.score_node(session, self.q, tid, |c, _, _| w.admits(c))?;
        if let Some(a) = s.admitted() {
            self.st.c.push(Reverse(a.cand));
            self.st.w.push(a);
        }
        Ok(())
    }

    /// Reads a 1-hop neighbor's page for its heap TID and neighbor list.
    pub fn read_one_hop(&self, session: &mut Session<'_>, tid: IndexTid, out: &mut Vec<IndexTid>) -> Result<HeapTid> {
        Ok(self.index.read_node(session, tid, None, Some(out), |_, _, _| false)?.heaptid)
    }

    /// Resolves, filters and scores the unvisited members of `two_hop`.
    /// Returns (navigation page reads, passing candidates found).
    pub fn expand_two_hop(&mut self, session: &mut Session<'_>, two_hop: &[IndexTid]) -> Result<(u64, usize)> {
        let mut pages = 0;
        let mut found = 0;
        for &t in two_hop {
            if self.st.is_visited(self.index.ordinal(t)) {
                continue;
            }
            let h = resolve_heaptid(self.index, session, t, self.tm)?;
            if !self.tm.enabled() {
                pages += 1;
            }
            if passes(self.index, self.bitmap, h, session.ledger_mut()) {
                self.st.visit(self.index.ordinal(t));
                self.score_and_offer(session, t)?;
                found += 1;
            }
        }
        Ok((pages, found))
    }

    pub fn seed(&mut self, session: &mut Session<'_>) -> Result<bool> {
        let Some(entry) = self.index.zoom_in(session, self.q)? else {
            return Ok(false);
        };
        self.st.visit(entry.cand.ord);
        self.st.c.push(Reverse(entry.cand));
        if passes(self.index, self.bitmap, entry.heaptid, session.ledger_mut()) {
            self.st.w.push(entry);
        }
        Ok(true)
    }
}

/// Filter-first search: only passing nodes are scored and traversed, and
/// failing 1-hop neighbors are bridged through their own neighbor lists.
///
/// Failing nodes are not marked visited, so a node reached again through a
/// different neighbor is checked again.
pub fn acorn_search(
    index: &HnswIndex,
    session: &mut Session<'_>,
    q: &Vector,
    bitmap: &FilterBitmap,
    tm: &TranslationMap,
    p: AcornParams,
) -> Result<SearchOutcome> {
    check_args(index, q, p.k, bitmap)?;
    let mut ff = FilterFirst {
        index,
        bitmap,
        tm,
        q: q.as_slice(),
        st: SearchState::new(index.len(), p.ef.max(p.k)),
    };
    if !ff.seed(session)? {
        return Ok(SearchOutcome::default());
    }
    let mut max_pages = 0;
    let mut one_hop = Vec::new();
    let mut two_hop = Vec::new();
    while let Some(Reverse(c)) = ff.st.c.pop() {
        if ff.st.should_stop(&c) {
            break;
        }
        index.expand(session, c.tid, 0, &mut one_hop)?;
        let mut pages = 1u64;
        for &n in &one_hop {
            if ff.st.is_visited(index.ordinal(n)) {
                continue;
            }
            let h = ff.read_one_hop(session, n, &mut two_hop)?;
            pages += 1;
            let pass = passes(index, bitmap, h, session.ledger_mut());
            if pass {
                ff.st.visit(index.ordinal(n));
                ff.score_and_offer(session, n)?;
            }
            if !pass || !p.adaptive_skip {
                pages += ff.expand_two_hop(session, &two_hop)?.0;
            }
        }
        max_pages = max_pages.max(pages);
    }
    let (neighbors, truncated) = finish(index, ff.st.w, p.k);
    Ok(SearchOutcome {
        neighbors,
        truncated,
        rounds: 1,
        max_expansion_pages: max_pages,
        trace: Vec::new(),
    })
}
