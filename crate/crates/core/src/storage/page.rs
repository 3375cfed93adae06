use crate::error::{Error, Result};
use crate::storage::geometry::PageGeometry;

/// How tuples are placed on a page and how their boundaries are recovered
/// from the raw image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TupleLayout {
    pub kind: u8,
    /// Start offsets are rounded up to this (1 = packed).
    pub align: u16,
    /// Fixed tuple size, or 0 when each tuple carries its own length.
    pub stride: u16,
    /// Byte offset of the little-endian `u16` length field when `stride == 0`.
    pub len_at: u8,
}

impl TupleLayout {
    pub const fn fixed(kind: u8, stride: u16) -> Self {
        Self {
            kind,
            align: 1,
            stride,
            len_at: 0,
        }
    }

    pub const fn prefixed(kind: u8, align: u16, len_at: u8) -> Self {
        Self {
            kind,
            align,
            stride: 0,
            len_at,
        }
    }
}

pub(crate) const HEADER_USED: usize = 12;
pub(crate) const NO_NEXT: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    layout: TupleLayout,
    next: u32,
    free: u16,
    data: Vec<u8>,
    slots: Vec<(u16, u16)>,
}

fn align_up(x: usize, a: usize) -> usize {
    x.div_ceil(a) * a
}

impl Page {
    pub fn new(geometry: &PageGeometry, layout: TupleLayout) -> Self {
        Self {
            layout,
            next: NO_NEXT,
            free: 0,
            data: vec![0; geometry.usable_bytes],
            slots: Vec::new(),
        }
    }

    pub fn layout(&self) -> TupleLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn next(&self) -> Option<u32> {
        (self.next != NO_NEXT).then_some(self.next)
    }

    pub(crate) fn set_next(&mut self, next: Option<u32>) {
        self.next = next.unwrap_or(NO_NEXT);
    }

    /// Bytes consumed including alignment padding of the last tuple.
    pub fn used_bytes(&self) -> usize {
        self.free as usize
    }

    pub(crate) fn fits(&self, tuple_len: usize) -> bool {
        let start = align_up(self.free as usize, self.layout.align as usize);
        align_up(start + tuple_len, self.layout.align as usize) <= self.data.len()
    }

    /// Appends a tuple, returning its slot, or `None` when the page is full.
    pub(crate) fn try_push(&mut self, tuple: &[u8]) -> Option<u16> {
        if self.layout.stride != 0 {
            debug_assert_eq!(tuple.len(), self.layout.stride as usize);
        }
        if !self.fits(tuple.len()) {
            return None;
        }
        let start = align_up(self.free as usize, self.layout.align as usize);
        self.data[start..start + tuple.len()].copy_from_slice(tuple);
        self.free = align_up(start + tuple.len(), self.layout.align as usize) as u16;
        self.slots.push((start as u16, tuple.len() as u16));
        Some((self.slots.len() - 1) as u16)
    }

    pub fn tuple(&self, slot: u16) -> Option<&[u8]> {
        let &(off, len) = self.slots.get(slot as usize)?;
        Some(&self.data[off as usize..off as usize + len as usize])
    }

    pub(crate) fn tuple_mut(&mut self, slot: u16) -> Option<&mut [u8]> {
        let &(off, len) = self.slots.get(slot as usize)?;
        Some(&mut self.data[off as usize..off as usize + len as usize])
    }

    /// Serializes into a `page_size_bytes` image: header, zero pad, usable area.
    pub(crate) fn write_image(&self, geometry: &PageGeometry, out: &mut Vec<u8>) {
        let start = out.len();
        out.push(self.layout.kind);
        out.push(self.layout.len_at);
        out.extend_from_slice(&self.layout.align.to_le_bytes());
        out.extend_from_slice(&self.layout.stride.to_le_bytes());
        out.extend_from_slice(&(self.slots.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.next.to_le_bytes());
        debug_assert_eq!(out.len() - start, HEADER_USED);
        out.resize(start + geometry.reserved_bytes, 0);
        out.extend_from_slice(&self.data);
    }

    pub(crate) fn read_image(geometry: &PageGeometry, img: &[u8]) -> Result<Self> {
        if img.len() != geometry.page_size_bytes {
            return Err(Error::Corrupt("short page image".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([img[o], img[o + 1]]);
        let layout = TupleLayout {
            kind: img[0],
            len_at: img[1],
            align: u16_at(2),
            stride: u16_at(4),
        };
        if layout.align == 0 {
            return Err(Error::Corrupt("zero alignment".into()));
        }
        let nslots = u16_at(6) as usize;
        let next = u32::from_le_bytes([img[8], img[9], img[10], img[11]]);
        let data = img[geometry.reserved_bytes..].to_vec();
        let mut slots = Vec::with_capacity(nslots);
        let mut off = 0usize;
        for _ in 0..nslots {
            off = align_up(off, layout.align as usize);
            let len = if layout.stride != 0 {
                layout.stride as usize
            } else {
                let at = off + layout.len_at as usize;
                if at + 2 > data.len() {
                    return Err(Error::Corrupt("length field past page end".into()));
                }
                u16::from_le_bytes([data[at], data[at + 1]]) as usize
            };
            if len == 0 || off + len > data.len() {
                return Err(Error::Corrupt("tuple past page end".into()));
            }
            slots.push((off as u16, len as u16));
            off += len;
        }
        let free = align_up(off, layout.align as usize) as u16;
        Ok(Self {
            layout,
            next,
            free,
            data,
            slots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_stride_density() {
        let g = PageGeometry::default();
        let mut p = Page::new(&g, TupleLayout::fixed(1, 100));
        let mut n = 0;
        while p.try_push(&[7u8; 100]).is_some() {
            n += 1;
        }
        assert_eq!(n, g.usable_bytes / 100);
    }

    #[test]
    fn image_roundtrip_recovers_slots() {
        let g = PageGeometry::default();
        let mut p = Page::new(&g, TupleLayout::prefixed(2, 8, 0));
        for len in [10u16, 17, 33] {
            let mut t = vec![0xAB; len as usize];
            t[..2].copy_from_slice(&len.to_le_bytes());
            p.try_push(&t).unwrap();
        }
        p.set_next(Some(5));
        let mut img = Vec::new();
        p.write_image(&g, &mut img);
        assert_eq!(img.len(), g.page_size_bytes);
        let back = Page::read_image(&g, &img).unwrap();
        assert_eq!(back, p);
    }
}
