//! Clustering index: k-means leaves stored as linked page chains.
//!
//! Search scores the centroids, opens the nearest leaves, checks the filter
//! for every member on every opened page, scores the passers, and (when
//! codes are quantized) rescores the best few from the heap.

mod kmeans;
mod sq8;

use serde::{Deserialize, Serialize};

use crate::bitmap::FilterBitmap;
use crate::dataset::{Dataset, DistanceMetric, Neighbor, RowId, Vector};
use crate::error::{Error, Result};
use crate::filtered::SearchOutcome;
use crate::storage::{FileId, HeapFile, HeapTid, PagedStore, Session, Tid, TupleLayout, HEAP_TUPLE_HEADER};

pub use kmeans::{kmeans, KMeans};
pub use sq8::Sq8Codebook;

const CENTROID_KIND: u8 = 3;
const ROOT_KIND: u8 = 4;
const LEAF_KIND: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScannBuildParams {
    /// `None` means `round(sqrt(N))`.
    pub num_leaves: Option<usize>,
    /// 1 or 2.
    pub max_num_levels: usize,
    pub kmeans_iters: usize,
    /// Store SQ8 codes in leaves instead of full vectors.
    pub quantize: bool,
    pub seed: u64,
}

impl Default for ScannBuildParams {
    fn default() -> Self {
        Self {
            num_leaves: None,
            max_num_levels: 1,
            kmeans_iters: 10,
            quantize: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScannSearchParams {
    pub k: usize,
    pub leaves_to_scan: usize,
    /// Quantized candidates kept for rescoring, as a multiple of `k`.
    pub reorder_factor: usize,
}

/// Persisted description of a ScaNN index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannMeta {
    pub params: ScannBuildParams,
    pub dim: usize,
    pub metric: DistanceMetric,
    pub len: usize,
    pub heap_file: FileId,
    pub centroid_file: FileId,
    pub root_file: Option<FileId>,
    pub leaf_file: FileId,
    /// Leaf ids under each root; leaves of one root are numbered contiguously.
    pub roots: Vec<Vec<u32>>,
    pub leaf_heads: Vec<Option<u32>>,
    pub leaf_pages: Vec<u32>,
    pub leaf_sizes: Vec<u32>,
    pub codebook: Option<Sq8Codebook>,
}

#[derive(Debug, Clone)]
pub struct ScannIndex {
    meta: ScannMeta,
    heap: HeapFile,
    per_page: usize,
}

fn centroid_layout(kind: u8, dim: usize) -> TupleLayout {
    TupleLayout::fixed(kind, (4 * dim) as u16)
}

fn vector_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

impl ScannIndex {
    pub fn num_leaves(&self) -> usize {
        self.meta.leaf_heads.len()
    }

    pub fn meta(&self) -> &ScannMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.meta.len
    }

    pub fn is_empty(&self) -> bool {
        self.meta.len == 0
    }

    /// Bytes per leaf entry: heap TID plus code.
    pub fn entry_bytes(&self) -> usize {
        Self::entry_bytes_for(self.meta.dim, self.meta.params.quantize)
    }

    fn entry_bytes_for(dim: usize, quantize: bool) -> usize {
        Tid::BYTES + if quantize { dim } else { 4 * dim }
    }

    pub fn build(store: &mut PagedStore, heap: &HeapFile, data: &Dataset, params: ScannBuildParams) -> Result<Self> {
        let n = data.len();
        let dim = data.dim();
        let leaves = params
            .num_leaves
            .unwrap_or_else(|| ((n as f64).sqrt().round() as usize).max(1));
        if leaves == 0 || leaves > n {
            return Err(Error::param(format!("num_leaves {leaves} must be in 1..={n}")));
        }
        if !(1..=2).contains(&params.max_num_levels) {
            return Err(Error::param("max_num_levels must be 1 or 2"));
        }
        if heap.dim() != dim || heap.len() != n {
            return Err(Error::param("heap does not hold the dataset being indexed"));
        }
        let usable = store.geometry().usable_bytes;
        let entry = Self::entry_bytes_for(dim, params.quantize);
        if entry > usable || 4 * dim > usable {
            return Err(Error::TupleTooLarge { size: entry.max(4 * dim), usable });
        }

        let km = kmeans(data.as_flat(), dim, leaves, params.kmeans_iters, params.seed)?;
        // Leaf order: grouped by root when there are two levels.
        let (order, root_centroids, roots): (Vec<usize>, Vec<f32>, Vec<Vec<u32>>) = if params.max_num_levels == 2 {
            let r = ((leaves as f64).sqrt().round() as usize).clamp(1, leaves);
            let top = kmeans(&km.centroids, dim, r, params.kmeans_iters, params.seed ^ 0x5eed)?;
            let mut order: Vec<usize> = (0..leaves).collect();
            order.sort_by_key(|&l| (top.assignment[l], l));
            let mut roots = vec![Vec::new(); r];
            for (new, &old) in order.iter().enumerate() {
                roots[top.assignment[old] as usize].push(new as u32);
            }
            (order, top.centroids, roots)
        } else {
            ((0..leaves).collect(), Vec::new(), Vec::new())
        };
        let mut new_id = vec![0u32; leaves];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new as u32;
        }

        let centroid_file = store.create_file("scann.centroids");
        for &old in &order {
            store.append(centroid_file, centroid_layout(CENTROID_KIND, dim), &vector_bytes(km.centroid(old)))?;
        }
        let root_file = if roots.is_empty() {
            None
        } else {
            let f = store.create_file("scann.roots");
            for c in root_centroids.chunks_exact(dim) {
                store.append(f, centroid_layout(ROOT_KIND, dim), &vector_bytes(c))?;
            }
            Some(f)
        };

        let codebook = params.quantize.then(|| Sq8Codebook::fit(data));
        let mut members: Vec<Vec<RowId>> = vec![Vec::new(); leaves];
        for (r, &a) in km.assignment.iter().enumerate() {
            members[new_id[a as usize] as usize].push(r as RowId);
        }
        let leaf_file = store.create_file("scann.leaves");
        let layout = TupleLayout::fixed(LEAF_KIND, entry as u16);
        let mut leaf_heads = Vec::with_capacity(leaves);
        let mut leaf_pages = Vec::with_capacity(leaves);
        let mut buf = Vec::with_capacity(entry);
        for m in &members {
            let mut head = None;
            let mut cur: Option<u32> = None;
            let mut pages = 0u32;
            for &r in m {
                buf.clear();
                let tid = heap
                    .tid_of(r)
                    .ok_or_else(|| Error::param(format!("rowid {r} missing from heap")))?;
                buf.extend_from_slice(&tid.0.encode());
                match &codebook {
                    Some(cb) => buf.extend_from_slice(&cb.encode(data.row(r))),
                    None => buf.extend_from_slice(&vector_bytes(data.row(r))),
                }
                let placed = match cur {
                    Some(b) => store.push_to_page(leaf_file, b, &buf)?,
                    None => None,
                };
                if placed.is_none() {
                    let b = store.new_page(leaf_file, layout)?;
                    if let Some(prev) = cur {
                        store.link_pages(leaf_file, prev, Some(b))?;
                    }
                    head.get_or_insert(b);
                    cur = Some(b);
                    pages += 1;
                    store
                        .push_to_page(leaf_file, b, &buf)?
                        .expect("entry fits an empty page");
                }
            }
            leaf_heads.push(head);
            leaf_pages.push(pages);
        }

        let meta = ScannMeta {
            params,
            dim,
            metric: data.metric(),
            len: n,
            heap_file: heap.file(),
            centroid_file,
            root_file,
            leaf_file,
            roots,
            leaf_heads,
            leaf_pages,
            leaf_sizes: members.iter().map(|m| m.len() as u32).collect(),
            codebook,
        };
        Ok(Self::open(store, meta, heap.clone()))
    }

    pub fn open(store: &PagedStore, meta: ScannMeta, heap: HeapFile) -> Self {
        let per_page = store.geometry().usable_bytes / (4 * meta.dim);
        Self { meta, heap, per_page }
    }

    /// Leaf members by rowid, read straight from the pages; test helper.
    pub fn leaf_members(&self, store: &PagedStore, leaf: usize) -> Result<Vec<RowId>> {
        let mut out = Vec::new();
        let mut next = self.meta.leaf_heads[leaf];
        while let Some(b) = next {
            let page = store.page(self.meta.leaf_file, b)?;
            for slot in 0..page.len() as u16 {
                let t = page.tuple(slot).expect("slot in range");
                out.push(self.rowid_of(HeapTid(Tid::decode(&t[..Tid::BYTES]))));
            }
            next = page.next();
        }
        Ok(out)
    }

    fn rowid_of(&self, h: HeapTid) -> RowId {
        self.heap.rowid_of(h).expect("leaf references a heap tuple that exists")
    }

    /// Scores every centroid in `ids` (ascending), one page read per distinct page.
    fn score_centroids(
        &self,
        session: &mut Session<'_>,
        file: FileId,
        q: &[f32],
        ids: impl Iterator<Item = u32>,
    ) -> Result<Vec<(f32, u32)>> {
        let mut out = Vec::new();
        let mut cur: Option<u32> = None;
        let mut scored_on_page = Vec::new();
        let flush = |session: &mut Session<'_>, block: u32, ids: &mut Vec<u32>, out: &mut Vec<(f32, u32)>| -> Result<()> {
            let view = session.access(file, block)?;
            for &id in ids.iter() {
                let t = view.tuple((id as usize % self.per_page) as u16)?;
                out.push((self.meta.metric.eval_le_bytes(q, t), id));
            }
            session.ledger_mut().distance_computation += ids.len() as u64;
            ids.clear();
            Ok(())
        };
        for id in ids {
            let block = (id as usize / self.per_page) as u32;
            if cur.is_some_and(|c| c != block) {
                flush(session, cur.expect("set"), &mut scored_on_page, &mut out)?;
            }
            cur = Some(block);
            scored_on_page.push(id);
        }
        if let Some(c) = cur {
            flush(session, c, &mut scored_on_page, &mut out)?;
        }
        Ok(out)
    }

    /// Picks the leaves to open, nearest first.
    fn choose_leaves(&self, session: &mut Session<'_>, q: &[f32], budget: usize) -> Result<Vec<u32>> {
        let mut scored = match self.meta.root_file {
            None => self.score_centroids(session, self.meta.centroid_file, q, 0..self.num_leaves() as u32)?,
            Some(rf) => {
                let mut roots = self.score_centroids(session, rf, q, 0..self.meta.roots.len() as u32)?;
                roots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut cands: Vec<u32> = Vec::new();
                for (_, r) in roots {
                    if cands.len() >= 2 * budget {
                        break;
                    }
                    cands.extend_from_slice(&self.meta.roots[r as usize]);
                }
                cands.sort_unstable();
                self.score_centroids(session, self.meta.centroid_file, q, cands.into_iter())?
            }
        };
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(budget);
        Ok(scored.into_iter().map(|(_, l)| l).collect())
    }

    pub fn filtered_search(
        &self,
        session: &mut Session<'_>,
        q: &Vector,
        bitmap: &FilterBitmap,
        p: ScannSearchParams,
    ) -> Result<SearchOutcome> {
        if q.dim() != self.meta.dim {
            return Err(Error::DimensionMismatch {
                expected: self.meta.dim,
                actual: q.dim(),
            });
        }
        if p.k == 0 || p.leaves_to_scan == 0 || p.reorder_factor == 0 {
            return Err(Error::param("k, leaves_to_scan and reorder_factor must be at least 1"));
        }
        if bitmap.universe() != self.len() {
            return Err(Error::param("bitmap does not cover the indexed rows"));
        }
        let q = q.as_slice();
        let metric = self.meta.metric;
        let leaves = self.choose_leaves(session, q, p.leaves_to_scan)?;
        session.ledger_mut().leaf_scanned += leaves.len() as u64;

        let code_at = Tid::BYTES;
        let mut hits: Vec<(f32, RowId, HeapTid)> = Vec::new();
        for &leaf in &leaves {
            let mut next = self.meta.leaf_heads[leaf as usize];
            while let Some(b) = next {
                let view = session.access(self.meta.leaf_file, b)?;
                let (mut checks, mut dists) = (0u64, 0u64);
                for slot in 0..view.len() as u16 {
                    let t = view.tuple(slot)?;
                    let h = HeapTid(Tid::decode(&t[..Tid::BYTES]));
                    let r = self.rowid_of(h);
                    checks += 1;
                    if !bitmap.probe(r) {
                        continue;
                    }
                    dists += 1;
                    let s = match &self.meta.codebook {
                        Some(cb) => cb.score(metric, q, &t[code_at..]),
                        None => metric.eval_le_bytes(q, &t[code_at..]),
                    };
                    hits.push((s, r, h));
                }
                next = view.next();
                let l = session.ledger_mut();
                l.filter_check += checks;
                l.distance_computation += dists;
            }
        }
        let by_rank = |a: &(f32, RowId, HeapTid), b: &(f32, RowId, HeapTid)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        hits.sort_by(by_rank);
        if self.meta.codebook.is_some() {
            hits.truncate(p.k.saturating_mul(p.reorder_factor));
            self.reorder(session, q, &mut hits)?;
            hits.sort_by(by_rank);
        }
        hits.truncate(p.k);
        let neighbors: Vec<Neighbor> = hits.into_iter().map(|(s, r, _)| Neighbor::new(r, s)).collect();
        Ok(SearchOutcome {
            truncated: neighbors.len() < p.k,
            neighbors,
            rounds: 1,
            max_expansion_pages: 0,
            trace: Vec::new(),
        })
    }

    /// Rescores candidates with full-precision heap vectors, reading each
    /// distinct heap page once.
    fn reorder(&self, session: &mut Session<'_>, q: &[f32], hits: &mut [(f32, RowId, HeapTid)]) -> Result<()> {
        hits.sort_by_key(|h| h.2);
        let metric = self.meta.metric;
        let dim = self.meta.dim;
        let mut i = 0;
        while i < hits.len() {
            let block = hits[i].2 .0.block;
            let mut j = i;
            let view = session.access(self.meta.heap_file, block)?;
            while j < hits.len() && hits[j].2 .0.block == block {
                let t = view.tuple(hits[j].2 .0.offset)?;
                hits[j].0 = metric.eval_le_bytes(q, &t[HEAP_TUPLE_HEADER..HEAP_TUPLE_HEADER + 4 * dim]);
                j += 1;
            }
            let l = session.ledger_mut();
            l.reorder_fetch += (j - i) as u64;
            l.distance_computation += (j - i) as u64;
            i = j;
        }
        Ok(())
    }
}
