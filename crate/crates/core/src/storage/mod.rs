//! Page-based storage emulation.
//!
//! A [`PagedStore`] is a set of files, each an array of fixed-size pages. All
//! pages are resident; there is no eviction. Reading a page goes through a
//! [`Session`], which counts the access in the session's [`EventLedger`] and
//! hands back a [`PageView`] that lives only until the next access. Anything a
//! search wants to keep past that point has to be copied out with
//! [`PageView::materialize_vector`], which is counted too.

mod geometry;
mod heap;
mod image;
mod ledger;
mod page;

use serde::{Deserialize, Serialize};

use crate::dataset::Vector;
use crate::error::{Error, Result};

pub use geometry::PageGeometry;
pub use heap::{HeapFile, HeapTupleView, HEAP_TUPLE_HEADER};
pub use ledger::{weighted_breakdown, Breakdown, CostWeights, EventLedger};
pub use page::{Page, TupleLayout};

/// Physical tuple address: page number and slot within the page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tid {
    pub block: u32,
    pub offset: u16,
}

impl Tid {
    pub const BYTES: usize = 6;

    pub fn new(block: u32, offset: u16) -> Self {
        Self { block, offset }
    }

    pub fn encode(&self) -> [u8; 6] {
        let b = self.block.to_le_bytes();
        let o = self.offset.to_le_bytes();
        [b[0], b[1], b[2], b[3], o[0], o[1]]
    }

    pub fn decode(bytes: &[u8]) -> Self {
        Self {
            block: u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            offset: u16::from_le_bytes([bytes[4], bytes[5]]),
        }
    }
}

/// Address of a heap tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeapTid(pub Tid);

/// Address of an index tuple. Never interchangeable with [`HeapTid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexTid(pub Tid);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileId(pub u16);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageFile {
    name: String,
    pages: Vec<Page>,
}

impl PageFile {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pages(&self) -> &[Page] {
        &self.pages
    }
}

/// Fixed-size page arena. Mutable only while indexes are being built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagedStore {
    geometry: PageGeometry,
    files: Vec<PageFile>,
    meta: Vec<u8>,
}

impl PagedStore {
    pub fn new(geometry: PageGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry,
            files: Vec::new(),
            meta: Vec::new(),
        })
    }

    pub fn geometry(&self) -> &PageGeometry {
        &self.geometry
    }

    pub fn create_file(&mut self, name: &str) -> FileId {
        self.files.push(PageFile {
            name: name.to_string(),
            pages: Vec::new(),
        });
        FileId((self.files.len() - 1) as u16)
    }

    pub fn file_by_name(&self, name: &str) -> Option<FileId> {
        self.files
            .iter()
            .position(|f| f.name == name)
            .map(|i| FileId(i as u16))
    }

    pub fn files(&self) -> &[PageFile] {
        &self.files
    }

    fn file(&self, id: FileId) -> Result<&PageFile> {
        self.files
            .get(id.0 as usize)
            .ok_or_else(|| Error::param(format!("unknown file {id:?}")))
    }

    fn file_mut(&mut self, id: FileId) -> Result<&mut PageFile> {
        self.files
            .get_mut(id.0 as usize)
            .ok_or_else(|| Error::param(format!("unknown file {id:?}")))
    }

    pub fn page_count(&self, id: FileId) -> usize {
        self.file(id).map_or(0, |f| f.pages.len())
    }

    /// Direct page lookup without accounting. Build-time and test use only.
    pub fn page(&self, id: FileId, block: u32) -> Result<&Page> {
        self.file(id)?
            .pages
            .get(block as usize)
            .ok_or(Error::UnknownPage { file: id, block })
    }

    pub(crate) fn page_mut(&mut self, id: FileId, block: u32) -> Result<&mut Page> {
        self.file_mut(id)?
            .pages
            .get_mut(block as usize)
            .ok_or(Error::UnknownPage { file: id, block })
    }

    pub fn new_page(&mut self, id: FileId, layout: TupleLayout) -> Result<u32> {
        let g = self.geometry;
        let f = self.file_mut(id)?;
        f.pages.push(Page::new(&g, layout));
        Ok((f.pages.len() - 1) as u32)
    }

    /// Appends to `block`, returning `None` if the tuple does not fit there.
    pub fn push_to_page(&mut self, id: FileId, block: u32, tuple: &[u8]) -> Result<Option<Tid>> {
        self.check_size(tuple.len())?;
        let page = self.page_mut(id, block)?;
        Ok(page.try_push(tuple).map(|slot| Tid::new(block, slot)))
    }

    /// Appends to the last page of the file, opening a new page when full.
    pub fn append(&mut self, id: FileId, layout: TupleLayout, tuple: &[u8]) -> Result<Tid> {
        self.check_size(tuple.len())?;
        let n = self.page_count(id);
        if n > 0 {
            let last = (n - 1) as u32;
            if self.page(id, last)?.layout() == layout {
                if let Some(tid) = self.push_to_page(id, last, tuple)? {
                    return Ok(tid);
                }
            }
        }
        let block = self.new_page(id, layout)?;
        self.push_to_page(id, block, tuple)?
            .ok_or(Error::TupleTooLarge {
                size: tuple.len(),
                usable: self.geometry.usable_bytes,
            })
    }

    pub fn link_pages(&mut self, id: FileId, block: u32, next: Option<u32>) -> Result<()> {
        self.page_mut(id, block)?.set_next(next);
        Ok(())
    }

    pub(crate) fn tuple_mut(&mut self, id: FileId, tid: Tid) -> Result<&mut [u8]> {
        self.page_mut(id, tid.block)?
            .tuple_mut(tid.offset)
            .ok_or(Error::DanglingTid { file: id, tid })
    }

    fn check_size(&self, len: usize) -> Result<()> {
        if len > self.geometry.usable_bytes {
            return Err(Error::TupleTooLarge {
                size: len,
                usable: self.geometry.usable_bytes,
            });
        }
        Ok(())
    }

    /// Opaque catalog blob persisted with the pages.
    pub fn meta(&self) -> &[u8] {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: Vec<u8>) {
        self.meta = meta;
    }

    pub fn session(&self) -> Session<'_> {
        Session {
            store: self,
            ledger: EventLedger::default(),
        }
    }
}

/// One query's view of the store. Owns its ledger; never shared.
pub struct Session<'s> {
    store: &'s PagedStore,
    ledger: EventLedger,
}

impl<'s> Session<'s> {
    pub fn store(&self) -> &'s PagedStore {
        self.store
    }

    /// Pins, reads and releases one page: a single counted access. The view
    /// borrows the session, so it must be dropped before the next access.
    pub fn access(&mut self, file: FileId, block: u32) -> Result<PageView<'_>> {
        let page = self.store.page(file, block)?;
        self.ledger.page_access += 1;
        Ok(PageView {
            page,
            file,
            block,
            ledger: &mut self.ledger,
        })
    }

    pub fn ledger(&self) -> &EventLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut EventLedger {
        &mut self.ledger
    }

    /// Returns the ledger and starts a fresh one.
    pub fn take_ledger(&mut self) -> EventLedger {
        std::mem::take(&mut self.ledger)
    }
}

/// Read-only window onto a pinned page.
pub struct PageView<'a> {
    page: &'a Page,
    file: FileId,
    block: u32,
    ledger: &'a mut EventLedger,
}

impl<'a> PageView<'a> {
    pub fn block(&self) -> u32 {
        self.block
    }

    pub fn len(&self) -> usize {
        self.page.len()
    }

    pub fn is_empty(&self) -> bool {
        self.page.is_empty()
    }

    pub fn next(&self) -> Option<u32> {
        self.page.next()
    }

    pub fn tuple(&self, slot: u16) -> Result<&[u8]> {
        self.page.tuple(slot).ok_or(Error::DanglingTid {
            file: self.file,
            tid: Tid::new(self.block, slot),
        })
    }

    pub fn ledger(&mut self) -> &mut EventLedger {
        self.ledger
    }

    /// Copies the `f32` run at `range` of the tuple in `slot` into
    /// query-local memory.
    pub fn materialize_vector(&mut self, slot: u16, range: std::ops::Range<usize>) -> Result<Vector> {
        let t = self.tuple(slot)?;
        let bytes = t
            .get(range)
            .ok_or_else(|| Error::Corrupt("vector range outside tuple".into()))?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        self.ledger.tuple_materialize += 1;
        Vector::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with_one_page() -> (PagedStore, FileId) {
        let mut s = PagedStore::new(PageGeometry::default()).unwrap();
        let f = s.create_file("t");
        let t: Vec<u8> = [1.0f32, 2.0].iter().flat_map(|x| x.to_le_bytes()).collect();
        s.append(f, TupleLayout::fixed(9, 8), &t).unwrap();
        (s, f)
    }

    #[test]
    fn repeated_access_is_not_deduplicated() {
        let (s, f) = store_with_one_page();
        let mut sess = s.session();
        sess.access(f, 0).unwrap();
        sess.access(f, 0).unwrap();
        assert_eq!(sess.ledger().page_access, 2);
    }

    #[test]
    fn unknown_page_is_an_error() {
        let (s, f) = store_with_one_page();
        let mut sess = s.session();
        assert!(matches!(sess.access(f, 3), Err(Error::UnknownPage { block: 3, .. })));
    }

    #[test]
    fn materialized_copy_outlives_view() {
        let (s, f) = store_with_one_page();
        let mut sess = s.session();
        let copy = {
            let mut v = sess.access(f, 0).unwrap();
            v.materialize_vector(0, 0..8).unwrap()
        };
        let again = sess.access(f, 0).unwrap();
        assert_eq!(copy.as_slice(), &[1.0, 2.0]);
        assert_eq!(again.tuple(0).unwrap().len(), 8);
        assert_eq!(sess.ledger().tuple_materialize, 1);
    }

    #[test]
    fn empty_slot_materialize_fails() {
        let (s, f) = store_with_one_page();
        let mut sess = s.session();
        let mut v = sess.access(f, 0).unwrap();
        assert!(v.materialize_vector(4, 0..8).is_err());
    }

    #[test]
    fn tid_roundtrip() {
        let t = Tid::new(0xDEAD_BEEF, 0x1234);
        assert_eq!(Tid::decode(&t.encode()), t);
    }
}
