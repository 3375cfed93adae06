//! Single-file store image: header, catalog blob, then raw pages.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::storage::{Page, PageFile, PageGeometry, PagedStore};

const MAGIC: &[u8; 8] = b"FVSSTORE";
const VERSION: u32 = 1;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt("truncated store image".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
}

impl PagedStore {
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [g.page_size_bytes, g.reserved_bytes, g.tid_size_bytes] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.files.len() as u32).to_le_bytes());
        for f in &self.files {
            out.extend_from_slice(&(f.name.len() as u16).to_le_bytes());
            out.extend_from_slice(f.name.as_bytes());
            out.extend_from_slice(&(f.pages.len() as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.meta);
        for f in &self.files {
            for p in &f.pages {
                p.write_image(g, &mut out);
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(Error::Corrupt("not a store image".into()));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(Error::Corrupt(format!("unsupported store version {version}")));
        }
        let page_size = c.u32()? as usize;
        let reserved = c.u32()? as usize;
        let tid = c.u32()? as usize;
        let geometry = PageGeometry {
            page_size_bytes: page_size,
            reserved_bytes: reserved,
            usable_bytes: page_size.saturating_sub(reserved),
            tid_size_bytes: tid,
        };
        geometry
            .validate()
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        let nfiles = c.u32()? as usize;
        let mut shapes = Vec::with_capacity(nfiles);
        for _ in 0..nfiles {
            let nlen = c.u16()? as usize;
            let name = String::from_utf8(c.take(nlen)?.to_vec())
                .map_err(|_| Error::Corrupt("file name is not utf-8".into()))?;
            let npages = c.u32()? as usize;
            shapes.push((name, npages));
        }
        let mlen = c.u64()? as usize;
        let meta = c.take(mlen)?.to_vec();
        let mut files = Vec::with_capacity(nfiles);
        for (name, npages) in shapes {
            let mut pages = Vec::with_capacity(npages);
            for _ in 0..npages {
                pages.push(Page::read_image(&geometry, c.take(page_size)?)?);
            }
            files.push(PageFile { name, pages });
        }
        if c.pos != buf.len() {
            return Err(Error::Corrupt("trailing bytes after last page".into()));
        }
        Ok(Self {
            geometry,
            files,
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use crate::storage::{HeapFile, PageGeometry, PagedStore, TupleLayout};

    #[test]
    fn image_roundtrip_is_bit_exact() {
        let mut s = PagedStore::new(PageGeometry::default()).unwrap();
        let mut h = HeapFile::create(&mut s, 5).unwrap();
        for r in 0..500 {
            h.insert(&mut s, r, &[r as f32, 1.0, 2.0, 3.0, -4.5]).unwrap();
        }
        let other = s.create_file("packed");
        for i in 0..40u8 {
            s.append(other, TupleLayout::fixed(3, 7), &[i; 7]).unwrap();
        }
        s.set_meta(br#"{"hello":1}"#.to_vec());
        let bytes = s.to_bytes();
        let back = PagedStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_images_are_rejected() {
        let s = PagedStore::new(PageGeometry::default()).unwrap();
        let mut bytes = s.to_bytes();
        assert!(PagedStore::from_bytes(&bytes[..10]).is_err());
        bytes[0] = b'X';
        assert!(PagedStore::from_bytes(&bytes).is_err());
    }
}
