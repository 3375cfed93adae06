//! Hierarchical small-world graph stored as node tuples in index pages.
//!
//! Construction runs over an in-memory adjacency structure and is then laid
//! out into pages; search only ever reads pages through a [`Session`].
//! A node's whole tuple (vector, heap TID and every layer's neighbor slots)
//! must fit on one page, which caps the layer a node may be assigned.

mod build;
mod layout;
mod search;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{DistanceMetric, RowId};
use crate::error::{Error, Result};
use crate::filtered::TranslationMap;
use crate::storage::{FileId, HeapFile, HeapTid, IndexTid, PageGeometry, PagedStore, Session};

pub use layout::{NodeLayout, NodeRef};
pub use search::{Admitted, Beam, Cand, NodeRead, ScoredNode, SearchState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswBuildParams {
    /// Max connections per upper layer; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    /// Level multiplier; `None` means `1 / ln(m)`.
    pub ml: Option<f64>,
    pub seed: u64,
}

impl Default for HnswBuildParams {
    fn default() -> Self {
        Self {
            m: 32,
            ef_construction: 200,
            ml: None,
            seed: 0,
        }
    }
}

impl HnswBuildParams {
    pub fn level_multiplier(&self) -> f64 {
        self.ml.unwrap_or(1.0 / (self.m as f64).ln())
    }

    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::param("M must be at least 2"));
        }
        if self.ef_construction == 0 {
            return Err(Error::param("ef_construction must be positive"));
        }
        if !self.level_multiplier().is_finite() || self.level_multiplier() <= 0.0 {
            return Err(Error::param("level multiplier must be positive"));
        }
        Ok(())
    }
}

/// Largest top layer whose neighbor lists still fit in one page:
/// `(L_max + 2) * M * tid_size <= usable_bytes`.
pub fn compute_lmax(m: usize, geometry: &PageGeometry) -> Result<usize> {
    if m == 0 {
        return Err(Error::param("M must be at least 1"));
    }
    let per_layer = m * geometry.tid_size_bytes;
    let layers = geometry.usable_bytes / per_layer;
    if layers < 2 {
        return Err(Error::GraphInfeasible { m });
    }
    Ok(layers - 2)
}

/// Persisted description of an index; the rest is recovered from its pages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnswMeta {
    pub file: FileId,
    pub heap_file: FileId,
    pub dim: usize,
    pub metric: DistanceMetric,
    pub params: HnswBuildParams,
    pub lmax: usize,
    pub level_cap: usize,
    pub entry: Option<IndexTid>,
    pub top_level: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    meta: HnswMeta,
    layout: NodeLayout,
    heap: HeapFile,
    /// Ordinal of slot 0 on each index page.
    block_base: Arc<[u32]>,
    heaptids: Arc<[HeapTid]>,
}

impl HnswIndex {
    pub fn open(store: &PagedStore, meta: HnswMeta, heap: HeapFile) -> Result<Self> {
        let layout = NodeLayout {
            dim: meta.dim,
            m: meta.params.m,
        };
        let mut block_base = Vec::with_capacity(store.page_count(meta.file));
        let mut heaptids = Vec::with_capacity(meta.len);
        for block in 0..store.page_count(meta.file) as u32 {
            block_base.push(heaptids.len() as u32);
            let page = store.page(meta.file, block)?;
            for slot in 0..page.len() as u16 {
                let t = page.tuple(slot).expect("slot in range");
                heaptids.push(NodeRef::new(layout, t).heaptid());
            }
        }
        if heaptids.len() != meta.len {
            return Err(Error::Corrupt(format!(
                "index holds {} nodes, catalog says {}",
                heaptids.len(),
                meta.len
            )));
        }
        Ok(Self {
            meta,
            layout,
            heap,
            block_base: block_base.into(),
            heaptids: heaptids.into(),
        })
    }

    pub fn meta(&self) -> &HnswMeta {
        &self.meta
    }

    pub fn params(&self) -> &HnswBuildParams {
        &self.meta.params
    }

    pub fn metric(&self) -> DistanceMetric {
        self.meta.metric
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len
    }

    pub fn is_empty(&self) -> bool {
        self.meta.len == 0
    }

    pub fn layout(&self) -> NodeLayout {
        self.layout
    }

    pub fn heap(&self) -> &HeapFile {
        &self.heap
    }

    pub fn file(&self) -> FileId {
        self.meta.file
    }

    pub fn entry(&self) -> Option<IndexTid> {
        self.meta.entry
    }

    pub fn top_level(&self) -> usize {
        self.meta.top_level
    }

    /// Max neighbors at layer 0.
    pub fn base_fanout(&self) -> usize {
        2 * self.meta.params.m
    }

    /// Dense node number of an index TID. Bookkeeping only, no page access.
    #[inline]
    pub fn ordinal(&self, tid: IndexTid) -> u32 {
        self.block_base[tid.0.block as usize] + tid.0.offset as u32
    }

    /// Builds the in-memory indextid-to-heaptid map, switched on or off.
    pub fn translation_map(&self, enabled: bool) -> TranslationMap {
        TranslationMap::new(self.block_base.clone(), self.heaptids.clone(), enabled)
    }

    pub fn rowid_of(&self, heaptid: HeapTid) -> RowId {
        self.heap
            .rowid_of(heaptid)
            .expect("index references a heap tuple that exists")
    }

    /// Reads the node's page and hands the decoded tuple to `f`.
    pub fn with_node<R>(&self, session: &mut Session<'_>, tid: IndexTid, f: impl FnOnce(NodeRef<'_>) -> R) -> Result<R> {
        let view = session.access(self.meta.file, tid.0.block)?;
        let t = view.tuple(tid.0.offset)?;
        Ok(f(NodeRef::new(self.layout, t)))
    }

    /// Every tuple's serialized size; used to assert the single-page invariant.
    pub fn tuple_sizes(&self, store: &PagedStore) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.len());
        for block in 0..store.page_count(self.meta.file) as u32 {
            let page = store.page(self.meta.file, block)?;
            for slot in 0..page.len() as u16 {
                out.push(page.tuple(slot).expect("slot in range").len());
            }
        }
        Ok(out)
    }

    /// Neighbor lists of every node at `layer`, as ordinals; test helper.
    pub fn adjacency(&self, store: &PagedStore, layer: usize) -> Result<Vec<Vec<u32>>> {
        let mut out = Vec::with_capacity(self.len());
        for block in 0..store.page_count(self.meta.file) as u32 {
            let page = store.page(self.meta.file, block)?;
            for slot in 0..page.len() as u16 {
                let n = NodeRef::new(self.layout, page.tuple(slot).expect("slot in range"));
                out.push(n.neighbors(layer).map(|t| self.ordinal(t)).collect());
            }
        }
        Ok(out)
    }

    pub fn level_of(&self, store: &PagedStore, tid: IndexTid) -> Result<usize> {
        let page = store.page(self.meta.file, tid.0.block)?;
        let t = page.tuple(tid.0.offset).ok_or(Error::DanglingTid {
            file: self.meta.file,
            tid: tid.0,
        })?;
        Ok(NodeRef::new(self.layout, t).level())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lmax_worked_values() {
        let g = PageGeometry::default();
        assert_eq!(compute_lmax(40, &g).unwrap(), 31);
        assert_eq!(compute_lmax(80, &g).unwrap(), 14);
        assert!(matches!(compute_lmax(700, &g), Err(Error::GraphInfeasible { m: 700 })));
    }

    #[test]
    fn lmax_is_the_largest_feasible_height() {
        let g = PageGeometry::default();
        for m in 1..=677 {
            let l = compute_lmax(m, &g).unwrap();
            assert!((l + 2) * m * 6 <= g.usable_bytes);
            assert!((l + 3) * m * 6 > g.usable_bytes);
        }
        assert!(compute_lmax(678, &g).is_err());
    }
}
