//! Filter-agnostic graph search strategies over an [`HnswIndex`].
//!
//! All four share the same base-layer machinery and the same filter model:
//! a [`FilterBitmap`] probed by rowid, where finding the rowid of an index
//! node requires its heap TID.

mod acorn;
mod iterative;
mod navix;
mod sweeping;

use std::sync::Arc;

use crate::bitmap::FilterBitmap;
use crate::dataset::{Neighbor, Vector};
use crate::error::{Error, Result};
use crate::hnsw::{HnswIndex, NodeRef};
use crate::storage::{EventLedger, HeapTid, IndexTid, Session};

pub use acorn::{acorn_search, AcornParams};
pub use iterative::{iterative_scan, IterativeParams};
pub use navix::{navix_search, Heuristic, NavixHeuristicState, NavixParams};
pub use sweeping::{sweeping_search, SweepingParams};

/// Exact `indextid -> heaptid` lookup built alongside the index.
#[derive(Debug, Clone)]
pub struct TranslationMap {
    block_base: Arc<[u32]>,
    heaptids: Arc<[HeapTid]>,
    enabled: bool,
}

impl TranslationMap {
    pub(crate) fn new(block_base: Arc<[u32]>, heaptids: Arc<[HeapTid]>, enabled: bool) -> Self {
        Self {
            block_base,
            heaptids,
            enabled,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn len(&self) -> usize {
        self.heaptids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heaptids.is_empty()
    }

    pub fn lookup(&self, tid: IndexTid) -> Option<HeapTid> {
        let base = *self.block_base.get(tid.0.block as usize)?;
        let ord = base as usize + tid.0.offset as usize;
        let end = self
            .block_base
            .get(tid.0.block as usize + 1)
            .map_or(self.heaptids.len(), |&b| b as usize);
        (ord < end).then(|| self.heaptids[ord])
    }
}

/// Finds the heap TID behind an index node: a map lookup when the map is
/// enabled, otherwise a read of the node's index page.
pub fn resolve_heaptid(index: &HnswIndex, session: &mut Session<'_>, tid: IndexTid, tm: &TranslationMap) -> Result<HeapTid> {
    if tm.enabled {
        session.ledger_mut().translation_lookup += 1;
        return tm.lookup(tid).ok_or(Error::DanglingTid {
            file: index.file(),
            tid: tid.0,
        });
    }
    index.with_node(session, tid, |n: NodeRef<'_>| n.heaptid())
}

/// One counted bitmap probe.
#[inline]
pub(crate) fn passes(index: &HnswIndex, bitmap: &FilterBitmap, heaptid: HeapTid, ledger: &mut EventLedger) -> bool {
    ledger.filter_check += 1;
    bitmap.probe(index.rowid_of(heaptid))
}

/// Result of one filtered search.
#[derive(Debug, Clone, Default)]
pub struct SearchOutcome {
    pub neighbors: Vec<Neighbor>,
    /// Fewer than `k` passing rows were found before the search gave up.
    pub truncated: bool,
    /// Resumed rounds (iterative scan only; 1 otherwise).
    pub rounds: usize,
    /// Most index pages read while expanding a single node, excluding the
    /// reads that score candidates.
    pub max_expansion_pages: u64,
    /// Heuristic picked at each expansion (NaviX only).
    pub trace: Vec<Heuristic>,
}

pub(crate) fn check_args(index: &HnswIndex, q: &Vector, k: usize, bitmap: &FilterBitmap) -> Result<()> {
    index.check_query(q)?;
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if bitmap.cardinality() < k {
        return Err(Error::InsufficientCandidates {
            requested: k,
            available: bitmap.cardinality(),
        });
    }
    if bitmap.universe() != index.len() {
        return Err(Error::param(format!(
            "bitmap covers {} rows, index has {}",
            bitmap.universe(),
            index.len()
        )));
    }
    Ok(())
}

pub(crate) fn finish(index: &HnswIndex, w: crate::hnsw::Beam, k: usize) -> (Vec<Neighbor>, bool) {
    let out = index.top_k(w.into_sorted(), k);
    let truncated = out.len() < k;
    (out, truncated)
}
