use crate::dataset::{Dataset, DistanceMetric, RowId, Vector};
use crate::error::{Error, Result};
use crate::storage::{FileId, HeapTid, PageView, PagedStore, Session, Tid, TupleLayout};

/// `rowid: u64` then `len: u16` (unpadded tuple length), then the vector.
pub const HEAP_TUPLE_HEADER: usize = 10;
const HEAP_KIND: u8 = 1;
const LAYOUT: TupleLayout = TupleLayout::prefixed(HEAP_KIND, 8, 8);

/// Table of `(rowid, full-precision vector)` tuples.
///
/// Keeps an in-memory directory in both directions; this is what lets a
/// filter keyed by rowid be probed with a heap TID without touching a page.
#[derive(Debug, Clone)]
pub struct HeapFile {
    file: FileId,
    dim: usize,
    by_rowid: Vec<Option<HeapTid>>,
    by_tid: Vec<Vec<RowId>>,
}

impl HeapFile {
    pub fn create(store: &mut PagedStore, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("heap dim must be positive"));
        }
        let file = store.create_file("heap");
        Ok(Self {
            file,
            dim,
            by_rowid: Vec::new(),
            by_tid: Vec::new(),
        })
    }

    /// New heap holding every row of `ds` under its rowid.
    pub fn from_dataset(store: &mut PagedStore, ds: &Dataset) -> Result<Self> {
        let mut heap = Self::create(store, ds.dim())?;
        for (r, row) in ds.rows().enumerate() {
            heap.insert(store, r as RowId, row)?;
        }
        Ok(heap)
    }

    /// Rebuilds the directory of an existing heap file by walking its pages.
    pub fn open(store: &PagedStore, file: FileId, dim: usize) -> Result<Self> {
        let mut heap = Self {
            file,
            dim,
            by_rowid: Vec::new(),
            by_tid: Vec::new(),
        };
        for block in 0..store.page_count(file) as u32 {
            let page = store.page(file, block)?;
            for slot in 0..page.len() as u16 {
                let t = page.tuple(slot).expect("slot in range");
                let rowid = u64::from_le_bytes(t[..8].try_into().expect("8 bytes"));
                let rowid = RowId::try_from(rowid)
                    .map_err(|_| Error::Corrupt(format!("rowid {rowid} out of range")))?;
                heap.record(rowid, HeapTid(Tid::new(block, slot)))?;
            }
        }
        Ok(heap)
    }

    pub fn file(&self) -> FileId {
        self.file
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.by_tid.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_tid.is_empty()
    }

    /// Aligned on-page footprint of one tuple.
    pub fn tuple_bytes(dim: usize) -> usize {
        (HEAP_TUPLE_HEADER + 4 * dim).div_ceil(8) * 8
    }

    pub fn tuples_per_page(dim: usize, usable_bytes: usize) -> usize {
        usable_bytes / Self::tuple_bytes(dim)
    }

    fn record(&mut self, rowid: RowId, tid: HeapTid) -> Result<()> {
        let r = rowid as usize;
        if self.by_rowid.len() <= r {
            self.by_rowid.resize(r + 1, None);
        }
        if self.by_rowid[r].is_some() {
            return Err(Error::param(format!("rowid {rowid} inserted twice")));
        }
        self.by_rowid[r] = Some(tid);
        let b = tid.0.block as usize;
        if self.by_tid.len() <= b {
            self.by_tid.resize(b + 1, Vec::new());
        }
        debug_assert_eq!(self.by_tid[b].len(), tid.0.offset as usize);
        self.by_tid[b].push(rowid);
        Ok(())
    }

    pub fn insert(&mut self, store: &mut PagedStore, rowid: RowId, vector: &[f32]) -> Result<HeapTid> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if self.by_rowid.get(rowid as usize).is_some_and(Option::is_some) {
            return Err(Error::param(format!("rowid {rowid} inserted twice")));
        }
        let len = HEAP_TUPLE_HEADER + 4 * self.dim;
        let mut t = Vec::with_capacity(len);
        t.extend_from_slice(&(rowid as u64).to_le_bytes());
        t.extend_from_slice(&(len as u16).to_le_bytes());
        for v in vector {
            t.extend_from_slice(&v.to_le_bytes());
        }
        let tid = HeapTid(store.append(self.file, LAYOUT, &t)?);
        self.record(rowid, tid)?;
        Ok(tid)
    }

    pub fn tid_of(&self, rowid: RowId) -> Option<HeapTid> {
        self.by_rowid.get(rowid as usize).copied().flatten()
    }

    /// Directory lookup; no page access.
    pub fn rowid_of(&self, tid: HeapTid) -> Option<RowId> {
        self.by_tid
            .get(tid.0.block as usize)?
            .get(tid.0.offset as usize)
            .copied()
    }

    /// One page access; the returned view must be dropped before the next.
    pub fn fetch<'a>(&self, session: &'a mut Session<'_>, tid: HeapTid) -> Result<HeapTupleView<'a>> {
        let view = session.access(self.file, tid.0.block)?;
        view.tuple(tid.0.offset)?;
        Ok(HeapTupleView {
            view,
            slot: tid.0.offset,
            dim: self.dim,
        })
    }
}

pub struct HeapTupleView<'a> {
    view: PageView<'a>,
    slot: u16,
    dim: usize,
}

impl HeapTupleView<'_> {
    fn bytes(&self) -> &[u8] {
        self.view.tuple(self.slot).expect("checked at fetch")
    }

    pub fn rowid(&self) -> RowId {
        u64::from_le_bytes(self.bytes()[..8].try_into().expect("8 bytes")) as RowId
    }

    pub fn vector_bytes(&self) -> &[u8] {
        &self.bytes()[HEAP_TUPLE_HEADER..HEAP_TUPLE_HEADER + 4 * self.dim]
    }

    /// Scores the on-page vector against `q`, counting one distance computation.
    pub fn score(&mut self, metric: DistanceMetric, q: &[f32]) -> f32 {
        let d = metric.eval_le_bytes(q, self.vector_bytes());
        self.view.ledger().distance_computation += 1;
        d
    }

    pub fn materialize(&mut self) -> Result<Vector> {
        let range = HEAP_TUPLE_HEADER..HEAP_TUPLE_HEADER + 4 * self.dim;
        self.view.materialize_vector(self.slot, range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::PageGeometry;

    fn vec_of(dim: usize, seed: u32) -> Vec<f32> {
        (0..dim).map(|i| (seed * 31 + i as u32) as f32 * 0.5 - 7.25).collect()
    }

    #[test]
    fn page_count_matches_density() {
        let mut s = PagedStore::new(PageGeometry::default()).unwrap();
        let mut h = HeapFile::create(&mut s, 128).unwrap();
        for r in 0..1000 {
            h.insert(&mut s, r, &vec_of(128, r)).unwrap();
        }
        // 10 + 512 = 522, aligned to 528; floor(8128 / 528) = 15 per page.
        assert_eq!(HeapFile::tuple_bytes(128), 528);
        assert_eq!(HeapFile::tuples_per_page(128, 8128), 15);
        assert_eq!(s.page_count(h.file()), 1000usize.div_ceil(15));
        for b in 0..s.page_count(h.file()) as u32 {
            assert!(s.page(h.file(), b).unwrap().len() <= 15);
        }
    }

    #[test]
    fn fetch_roundtrips_bitwise_with_one_access() {
        let mut s = PagedStore::new(PageGeometry::default()).unwrap();
        let mut h = HeapFile::create(&mut s, 3).unwrap();
        let v = vec![1.5f32, -0.0, f32::MIN_POSITIVE];
        let tid = h.insert(&mut s, 42, &v).unwrap();
        let mut sess = s.session();
        let mut t = h.fetch(&mut sess, tid).unwrap();
        assert_eq!(t.rowid(), 42);
        let got = t.materialize().unwrap();
        let bits: Vec<u32> = got.as_slice().iter().map(|x| x.to_bits()).collect();
        let want: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits, want);
        assert_eq!(sess.ledger().page_access, 1);
        assert_eq!(h.rowid_of(tid), Some(42));
    }

    #[test]
    fn dangling_tid_is_an_error() {
        let mut s = PagedStore::new(PageGeometry::default()).unwrap();
        let mut h = HeapFile::create(&mut s, 2).unwrap();
        h.insert(&mut s, 0, &[0.0, 1.0]).unwrap();
        let mut sess = s.session();
        assert!(h.fetch(&mut sess, HeapTid(Tid::new(0, 9))).is_err());
        assert!(h.fetch(&mut sess, HeapTid(Tid::new(5, 0))).is_err());
    }

    #[test]
    fn open_rebuilds_directory() {
        let mut s = PagedStore::new(PageGeometry::default()).unwrap();
        let mut h = HeapFile::create(&mut s, 4).unwrap();
        for r in 0..300 {
            h.insert(&mut s, r, &vec_of(4, r)).unwrap();
        }
        let re = HeapFile::open(&s, h.file(), 4).unwrap();
        for r in 0..300 {
            assert_eq!(re.tid_of(r), h.tid_of(r));
        }
    }
}
