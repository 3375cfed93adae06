//! On-page format of an HNSW node tuple.
//!
//! ```text
//! 0   len: u16           unpadded tuple length
//! 2   level: u8
//! 3   (pad)
//! 4   heaptid: 6 bytes
//! 10  vector: dim x f32
//! ..  counts: (level + 1) x u16, live neighbors per layer
//! ..  slots: (level + 2) x M x 6-byte TIDs; layer 0 owns the first 2M
//! ```
//!
//! Slot capacity is allocated up front so a tuple never grows after build.

use crate::storage::{HeapTid, IndexTid, Tid, TupleLayout};

pub(crate) const NODE_KIND: u8 = 2;
pub(crate) const NODE_LAYOUT: TupleLayout = TupleLayout::prefixed(NODE_KIND, 8, 0);
const FIXED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    pub dim: usize,
    pub m: usize,
}

impl NodeLayout {
    pub fn vector_range(&self) -> std::ops::Range<usize> {
        FIXED..FIXED + 4 * self.dim
    }

    fn counts_at(&self) -> usize {
        FIXED + 4 * self.dim
    }

    fn slots_at(&self, level: usize) -> usize {
        self.counts_at() + 2 * (level + 1)
    }

    pub fn capacity(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn layer_slot_start(&self, layer: usize) -> usize {
        if layer == 0 {
            0
        } else {
            2 * self.m + (layer - 1) * self.m
        }
    }

    /// Bytes spent on neighbor references for a node of `level`.
    pub fn neighbor_bytes(&self, level: usize) -> usize {
        (level + 2) * self.m * Tid::BYTES
    }

    /// Unpadded tuple length.
    pub fn tuple_len(&self, level: usize) -> usize {
        self.slots_at(level) + self.neighbor_bytes(level)
    }

    /// Footprint on a page including 8-byte alignment.
    pub fn tuple_bytes(&self, level: usize) -> usize {
        self.tuple_len(level).div_ceil(8) * 8
    }

    pub fn encode(&self, level: usize, heaptid: HeapTid, vector: &[f32], links: &[Vec<IndexTid>]) -> Vec<u8> {
        debug_assert_eq!(vector.len(), self.dim);
        debug_assert_eq!(links.len(), level + 1);
        let len = self.tuple_len(level);
        let mut t = vec![0u8; len];
        t[0..2].copy_from_slice(&(len as u16).to_le_bytes());
        t[2] = level as u8;
        t[4..10].copy_from_slice(&heaptid.0.encode());
        for (i, v) in vector.iter().enumerate() {
            t[FIXED + 4 * i..FIXED + 4 * i + 4].copy_from_slice(&v.to_le_bytes());
        }
        for (layer, list) in links.iter().enumerate() {
            assert!(list.len() <= self.capacity(layer), "neighbor list over capacity");
            let c = self.counts_at() + 2 * layer;
            t[c..c + 2].copy_from_slice(&(list.len() as u16).to_le_bytes());
            let base = self.slots_at(level) + self.layer_slot_start(layer) * Tid::BYTES;
            for (j, n) in list.iter().enumerate() {
                let o = base + j * Tid::BYTES;
                t[o..o + Tid::BYTES].copy_from_slice(&n.0.encode());
            }
        }
        t
    }
}

/// Borrowed, decoded view of a node tuple.
pub struct NodeRef<'a> {
    layout: NodeLayout,
    bytes: &'a [u8],
}

impl<'a> NodeRef<'a> {
    pub fn new(layout: NodeLayout, bytes: &'a [u8]) -> Self {
        Self { layout, bytes }
    }

    pub fn level(&self) -> usize {
        self.bytes[2] as usize
    }

    pub fn heaptid(&self) -> HeapTid {
        HeapTid(Tid::decode(&self.bytes[4..10]))
    }

    pub fn vector_bytes(&self) -> &'a [u8] {
        &self.bytes[self.layout.vector_range()]
    }

    pub fn neighbors(&self, layer: usize) -> impl Iterator<Item = IndexTid> + 'a {
        let level = self.level();
        let (count, base) = if layer <= level {
            let c = self.layout.counts_at() + 2 * layer;
            let count = u16::from_le_bytes([self.bytes[c], self.bytes[c + 1]]) as usize;
            let base = self.layout.slots_at(level) + self.layout.layer_slot_start(layer) * Tid::BYTES;
            (count, base)
        } else {
            (0, 0)
        };
        let bytes = self.bytes;
        (0..count).map(move |j| {
            let o = base + j * Tid::BYTES;
            IndexTid(Tid::decode(&bytes[o..o + Tid::BYTES]))
        })
    }
}
