#![allow(dead_code)]

use fvs_lab::hnsw::{HnswBuildParams, HnswIndex};
use fvs_lab::storage::{HeapFile, PageGeometry, PagedStore};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::{Dataset, DistanceMetric, Neighbor, Vector};

pub struct Lab {
    pub store: PagedStore,
    pub data: Dataset,
    pub queries: Vec<Vector>,
    pub index: HnswIndex,
}

pub fn lab(n: usize, nq: usize, dim: usize, m: usize, efc: usize, seed: u64) -> Lab {
    let (data, queries) =
        synth::generate_split(n, nq, dim, Distribution::Uniform, DistanceMetric::L2Squared, seed).unwrap();
    let mut store = PagedStore::new(PageGeometry::default()).unwrap();
    let heap = HeapFile::from_dataset(&mut store, &data).unwrap();
    let params = HnswBuildParams {
        m,
        ef_construction: efc,
        ml: None,
        seed,
    };
    let index = HnswIndex::build(&mut store, &heap, &data, params).unwrap();
    Lab {
        store,
        data,
        queries,
        index,
    }
}

/// Independent exhaustive reference: full sort of every score.
pub fn full_sort(data: &Dataset, q: &[f32], k: usize, keep: impl Fn(u32) -> bool) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = (0..data.len() as u32)
        .filter(|&r| keep(r))
        .map(|r| {
            let s: f32 = data.row(r).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            Neighbor::new(r, s)
        })
        .collect();
    all.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap().then(a.rowid.cmp(&b.rowid)));
    all.truncate(k);
    all
}

pub fn recall(got: &[Neighbor], truth: &[Neighbor]) -> f64 {
    let hits = got
        .iter()
        .filter(|g| truth.iter().any(|t| t.rowid == g.rowid))
        .count();
    hits as f64 / truth.len() as f64
}
