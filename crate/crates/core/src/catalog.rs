//! What a storage file holds: the heap, one index, and the knobs it was
//! built with. The catalog is JSON in the store's metadata blob.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, DistanceMetric};
use crate::error::{Error, Result};
use crate::hnsw::{HnswBuildParams, HnswIndex, HnswMeta};
use crate::scann::{ScannBuildParams, ScannIndex, ScannMeta};
use crate::storage::{FileId, HeapFile, PageGeometry, PagedStore};

const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSpec {
    Hnsw(HnswBuildParams),
    Scann(ScannBuildParams),
}

impl IndexSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            IndexSpec::Hnsw(_) => "hnsw",
            IndexSpec::Scann(_) => "scann",
        }
    }

    /// Stable hash of the dataset and build knobs; names the storage file.
    pub fn config_hash(&self, dataset_hash: &str, geometry: &PageGeometry) -> String {
        let mut h = Sha256::new();
        h.update(dataset_hash.as_bytes());
        h.update(serde_json::to_vec(self).expect("serializable"));
        h.update(serde_json::to_vec(geometry).expect("serializable"));
        hex::encode(&h.finalize()[..8])
    }

    pub fn file_name(&self, dataset_hash: &str, geometry: &PageGeometry) -> String {
        format!("{}-{}.fvs", self.kind(), self.config_hash(dataset_hash, geometry))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexMeta {
    Hnsw(HnswMeta),
    Scann(ScannMeta),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: u32,
    pub dataset_hash: String,
    pub n: usize,
    pub dim: usize,
    pub metric: DistanceMetric,
    pub heap_file: FileId,
    pub spec: IndexSpec,
    pub index: IndexMeta,
}

impl Catalog {
    pub fn read(store: &PagedStore) -> Result<Self> {
        if store.meta().is_empty() {
            return Err(Error::Corrupt("store has no catalog".into()));
        }
        let c: Catalog = serde_json::from_slice(store.meta())?;
        if c.version != CATALOG_VERSION {
            return Err(Error::Corrupt(format!("unsupported catalog version {}", c.version)));
        }
        Ok(c)
    }

    pub fn write(&self, store: &mut PagedStore) -> Result<()> {
        store.set_meta(serde_json::to_vec(self)?);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum AnyIndex {
    Hnsw(HnswIndex),
    Scann(ScannIndex),
}

/// An opened storage file.
#[derive(Debug)]
pub struct IndexStore {
    pub store: PagedStore,
    pub catalog: Catalog,
    pub index: AnyIndex,
}

impl IndexStore {
    /// Loads `ds` into a fresh heap and builds the index described by `spec`.
    pub fn build(ds: &Dataset, spec: IndexSpec, geometry: PageGeometry) -> Result<Self> {
        let mut store = PagedStore::new(geometry)?;
        let heap = HeapFile::from_dataset(&mut store, ds)?;
        let (index, meta) = match spec {
            IndexSpec::Hnsw(p) => {
                let idx = HnswIndex::build(&mut store, &heap, ds, p)?;
                let meta = IndexMeta::Hnsw(idx.meta().clone());
                (AnyIndex::Hnsw(idx), meta)
            }
            IndexSpec::Scann(p) => {
                let idx = ScannIndex::build(&mut store, &heap, ds, p)?;
                let meta = IndexMeta::Scann(idx.meta().clone());
                (AnyIndex::Scann(idx), meta)
            }
        };
        let catalog = Catalog {
            version: CATALOG_VERSION,
            dataset_hash: ds.content_hash(),
            n: ds.len(),
            dim: ds.dim(),
            metric: ds.metric(),
            heap_file: heap.file(),
            spec,
            index: meta,
        };
        catalog.write(&mut store)?;
        Ok(Self { store, catalog, index })
    }

    pub fn open(store: PagedStore) -> Result<Self> {
        let catalog = Catalog::read(&store)?;
        let heap = HeapFile::open(&store, catalog.heap_file, catalog.dim)?;
        if heap.len() != catalog.n {
            return Err(Error::Corrupt(format!("heap holds {} rows, catalog says {}", heap.len(), catalog.n)));
        }
        let index = match &catalog.index {
            IndexMeta::Hnsw(m) => AnyIndex::Hnsw(HnswIndex::open(&store, m.clone(), heap)?),
            IndexMeta::Scann(m) => AnyIndex::Scann(ScannIndex::open(&store, m.clone(), heap)),
        };
        Ok(Self { store, catalog, index })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::open(PagedStore::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.store.save(path)
    }

    pub fn hnsw(&self) -> Option<&HnswIndex> {
        match &self.index {
            AnyIndex::Hnsw(i) => Some(i),
            AnyIndex::Scann(_) => None,
        }
    }

    pub fn scann(&self) -> Option<&ScannIndex> {
        match &self.index {
            AnyIndex::Scann(i) => Some(i),
            AnyIndex::Hnsw(_) => None,
        }
    }
}
