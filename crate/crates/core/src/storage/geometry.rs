use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Page dimensions shared by every file in a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageGeometry {
    pub page_size_bytes: usize,
    /// Page header plus special space; never available to tuples.
    pub reserved_bytes: usize,
    pub usable_bytes: usize,
    pub tid_size_bytes: usize,
}

impl Default for PageGeometry {
    fn default() -> Self {
        Self {
            page_size_bytes: 8192,
            reserved_bytes: 64,
            usable_bytes: 8128,
            tid_size_bytes: 6,
        }
    }
}

impl PageGeometry {
    /// Custom page size with the default reservation; mainly for tests that
    /// want multi-page chains on small data.
    pub fn with_page_size(page_size_bytes: usize) -> Result<Self> {
        let g = Self {
            page_size_bytes,
            usable_bytes: page_size_bytes.saturating_sub(64),
            ..Self::default()
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tid_size_bytes != 6 {
            return Err(Error::param("tid_size_bytes must be 6"));
        }
        if self.reserved_bytes < super::page::HEADER_USED
            || self.usable_bytes == 0
            || self.usable_bytes + self.reserved_bytes != self.page_size_bytes
            || self.page_size_bytes > u16::MAX as usize + 1
        {
            return Err(Error::param(format!("inconsistent page geometry {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_consistent() {
        let g = PageGeometry::default();
        assert_eq!(g.usable_bytes, g.page_size_bytes - g.reserved_bytes);
        assert_eq!(g.tid_size_bytes, 6);
        g.validate().unwrap();
    }

    #[test]
    fn tiny_pages_are_rejected() {
        assert!(PageGeometry::with_page_size(64).is_err());
        assert!(PageGeometry::with_page_size(1024).is_ok());
    }
}
