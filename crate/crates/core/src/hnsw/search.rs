//! Base-layer search machinery shared by every graph strategy.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::HnswIndex;
use crate::dataset::{Neighbor, Vector};
use crate::error::{Error, Result};
use crate::storage::{EventLedger, HeapTid, IndexTid, Session};

/// A scored index node. Orders by score, then by node ordinal.
#[derive(Debug, Clone, Copy)]
pub struct Cand {
    pub score: f32,
    pub tid: IndexTid,
    pub ord: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.ord.cmp(&other.ord))
    }
}

/// A member of the result queue, holding its query-local vector copy.
#[derive(Debug, Clone)]
pub struct Admitted {
    pub cand: Cand,
    pub heaptid: HeapTid,
    pub copy: Vector,
}

impl PartialEq for Admitted {
    fn eq(&self, other: &Self) -> bool {
        self.cand == other.cand
    }
}

impl Eq for Admitted {}

impl PartialOrd for Admitted {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Admitted {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cand.cmp(&other.cand)
    }
}

/// Bounded max-queue `W` of the best `ef` admitted nodes.
#[derive(Debug, Clone)]
pub struct Beam {
    ef: usize,
    heap: BinaryHeap<Admitted>,
}

impl Beam {
    pub fn new(ef: usize) -> Self {
        Self {
            ef,
            heap: BinaryHeap::with_capacity(ef + 1),
        }
    }

    pub fn ef(&self) -> usize {
        self.ef
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.ef
    }

    pub fn worst(&self) -> Option<Cand> {
        self.heap.peek().map(|a| a.cand)
    }

    /// Whether a node scoring `c` would enter the queue.
    pub fn admits(&self, c: &Cand) -> bool {
        !self.is_full() || self.worst().is_some_and(|w| *c < w)
    }

    /// Inserts and returns whatever got pushed out.
    pub fn push(&mut self, a: Admitted) -> Option<Admitted> {
        self.heap.push(a);
        if self.heap.len() > self.ef {
            self.heap.pop()
        } else {
            None
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Admitted> {
        self.heap.iter()
    }

    /// Ascending by score.
    pub fn into_sorted(self) -> Vec<Admitted> {
        self.heap.into_sorted_vec()
    }

    pub fn drain(&mut self) -> Vec<Admitted> {
        std::mem::take(&mut self.heap).into_sorted_vec()
    }
}

/// Per-query traversal state: candidates `C`, results `W`, visited `V`.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub c: BinaryHeap<Reverse<Cand>>,
    pub w: Beam,
    visited: Vec<u64>,
    visited_count: usize,
}

impl SearchState {
    pub fn new(n: usize, ef: usize) -> Self {
        Self {
            c: BinaryHeap::new(),
            w: Beam::new(ef),
            visited: vec![0; n.div_ceil(64)],
            visited_count: 0,
        }
    }

    /// Marks `ord` visited; false if it already was.
    pub fn visit(&mut self, ord: u32) -> bool {
        let (i, b) = (ord as usize / 64, ord % 64);
        let fresh = self.visited[i] & (1 << b) == 0;
        if fresh {
            self.visited[i] |= 1 << b;
            self.visited_count += 1;
        }
        fresh
    }

    pub fn is_visited(&self, ord: u32) -> bool {
        self.visited[ord as usize / 64] & (1 << (ord % 64)) != 0
    }

    pub fn visited_count(&self) -> usize {
        self.visited_count
    }

    /// The unified stop rule: `W` is full and the best candidate cannot improve it.
    pub fn should_stop(&self, next: &Cand) -> bool {
        self.w.is_full() && self.w.worst().is_some_and(|w| *next > w)
    }
}

/// Outcome of scoring one index node.
pub struct ScoredNode {
    pub cand: Cand,
    pub heaptid: HeapTid,
    /// Present when the caller asked to keep the vector.
    pub copy: Option<Vector>,
}

impl ScoredNode {
    pub fn admitted(self) -> Option<Admitted> {
        let ScoredNode { cand, heaptid, copy } = self;
        copy.map(|copy| Admitted { cand, heaptid, copy })
    }
}

/// What [`HnswIndex::read_node`] pulled off the page.
pub struct NodeRead {
    pub heaptid: HeapTid,
    pub cand: Option<Cand>,
    pub copy: Option<Vector>,
}

impl HnswIndex {
    /// Reads a node's page, scores its inline vector and, if `keep` says so,
    /// copies the vector out before the page is released.
    pub fn score_node(
        &self,
        session: &mut Session<'_>,
        q: &[f32],
        tid: IndexTid,
        keep: impl FnOnce(&Cand, HeapTid, &mut EventLedger) -> bool,
    ) -> Result<ScoredNode> {
        let r = self.read_node(session, tid, Some(q), None, |c, h, l| keep(c.expect("scored"), h, l))?;
        Ok(ScoredNode {
            cand: r.cand.expect("scored"),
            heaptid: r.heaptid,
            copy: r.copy,
        })
    }

    /// One page access to a node tuple. Optionally scores it against `q`,
    /// copies its base-layer neighbor list into `nbrs`, and materializes the
    /// vector when `keep` returns true.
    pub fn read_node(
        &self,
        session: &mut Session<'_>,
        tid: IndexTid,
        q: Option<&[f32]>,
        nbrs: Option<&mut Vec<IndexTid>>,
        keep: impl FnOnce(Option<&Cand>, HeapTid, &mut EventLedger) -> bool,
    ) -> Result<NodeRead> {
        let ord = self.ordinal(tid);
        let mut view = session.access(self.file(), tid.0.block)?;
        let t = view.tuple(tid.0.offset)?;
        let node = super::NodeRef::new(self.layout(), t);
        let heaptid = node.heaptid();
        if let Some(out) = nbrs {
            out.clear();
            out.extend(node.neighbors(0));
        }
        let cand = q.map(|q| Cand {
            score: self.metric().eval_le_bytes(q, node.vector_bytes()),
            tid,
            ord,
        });
        if cand.is_some() {
            view.ledger().distance_computation += 1;
        }
        let copy = if keep(cand.as_ref(), heaptid, view.ledger()) {
            Some(view.materialize_vector(tid.0.offset, self.layout().vector_range())?)
        } else {
            None
        };
        Ok(NodeRead { heaptid, cand, copy })
    }

    /// Reads a node's page and collects its neighbor list at `layer`
    /// into `out`. Counts one hop.
    pub fn expand(&self, session: &mut Session<'_>, tid: IndexTid, layer: usize, out: &mut Vec<IndexTid>) -> Result<()> {
        out.clear();
        let mut view = session.access(self.file(), tid.0.block)?;
        view.ledger().hop += 1;
        let t = view.tuple(tid.0.offset)?;
        out.extend(super::NodeRef::new(self.layout(), t).neighbors(layer));
        Ok(())
    }

    pub(crate) fn check_query(&self, q: &Vector) -> Result<()> {
        if q.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: q.dim(),
            });
        }
        Ok(())
    }

    /// Greedy descent through the upper layers, ignoring any filter. Returns
    /// the layer-0 entry, already holding its vector copy.
    pub fn zoom_in(&self, session: &mut Session<'_>, q: &[f32]) -> Result<Option<Admitted>> {
        let Some(entry) = self.entry() else {
            return Ok(None);
        };
        let mut cur = self
            .score_node(session, q, entry, |_, _, _| true)?
            .admitted()
            .expect("kept");
        let mut nbrs = Vec::new();
        for layer in (1..=self.top_level()).rev() {
            loop {
                self.expand(session, cur.cand.tid, layer, &mut nbrs)?;
                let mut moved = false;
                for &n in &nbrs {
                    let best = cur.cand;
                    let s = self.score_node(session, q, n, |c, _, _| *c < best)?;
                    if let Some(a) = s.admitted() {
                        cur = a;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
        }
        Ok(Some(cur))
    }

    /// Plain beam search over the base layer.
    pub fn search_unfiltered(&self, session: &mut Session<'_>, q: &Vector, k: usize, ef: usize) -> Result<Vec<Neighbor>> {
        self.check_query(q)?;
        if k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        let q = q.as_slice();
        let mut st = SearchState::new(self.len(), ef.max(k));
        let Some(entry) = self.zoom_in(session, q)? else {
            return Ok(Vec::new());
        };
        st.visit(entry.cand.ord);
        st.c.push(Reverse(entry.cand));
        st.w.push(entry);
        let mut nbrs = Vec::new();
        while let Some(Reverse(c)) = st.c.pop() {
            if st.should_stop(&c) {
                break;
            }
            self.expand(session, c.tid, 0, &mut nbrs)?;
            for &n in &nbrs {
                if !st.visit(self.ordinal(n)) {
                    continue;
                }
                let w = &st.w;
                let s = self.score_node(session, q, n, |c, _, _| w.admits(c))?;
                if let Some(a) = s.admitted() {
                    st.c.push(Reverse(a.cand));
                    st.w.push(a);
                }
            }
        }
        Ok(self.top_k(st.w.into_sorted(), k))
    }

    /// First `k` admitted entries as rowid-scored neighbors.
    pub(crate) fn top_k(&self, sorted: Vec<Admitted>, k: usize) -> Vec<Neighbor> {
        sorted
            .into_iter()
            .take(k)
            .map(|a| Neighbor::new(self.rowid_of(a.heaptid), a.cand.score))
            .collect()
    }
}
