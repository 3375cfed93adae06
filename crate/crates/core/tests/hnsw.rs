mod common;

use common::{full_sort, lab, recall};
use fvs_lab::hnsw::{compute_lmax, HnswBuildParams, HnswIndex};
use fvs_lab::storage::{HeapFile, PageGeometry, PagedStore};
use fvs_lab::{Dataset, DistanceMetric, Error, Vector};

#[test]
fn single_node_index() {
    let data = Dataset::from_rows(DistanceMetric::L2Squared, [[1.0f32, 2.0]]).unwrap();
    let mut store = PagedStore::new(PageGeometry::default()).unwrap();
    let heap = HeapFile::from_dataset(&mut store, &data).unwrap();
    let idx = HnswIndex::build(&mut store, &heap, &data, HnswBuildParams::default()).unwrap();
    let mut s = store.session();
    let q = Vector::new(vec![0.0, 0.0]).unwrap();
    let got = idx.search_unfiltered(&mut s, &q, 1, 10).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].rowid, 0);
    assert_eq!(got[0].score, 5.0);
}

#[test]
fn infeasible_fanout_is_rejected() {
    let data = Dataset::from_rows(DistanceMetric::L2Squared, [[1.0f32]]).unwrap();
    let mut store = PagedStore::new(PageGeometry::default()).unwrap();
    let heap = HeapFile::from_dataset(&mut store, &data).unwrap();
    let p = HnswBuildParams {
        m: 700,
        ..Default::default()
    };
    assert!(matches!(
        HnswIndex::build(&mut store, &heap, &data, p),
        Err(Error::GraphInfeasible { m: 700 })
    ));
}

#[test]
fn exhaustive_beam_is_exact() {
    let l = lab(1000, 20, 16, 8, 64, 1);
    for q in &l.queries {
        let mut s = l.store.session();
        let got = l.index.search_unfiltered(&mut s, q, 10, 1000).unwrap();
        let want = full_sort(&l.data, q.as_slice(), 10, |_| true);
        assert_eq!(recall(&got, &want), 1.0);
        assert_eq!(got, want);
    }
}

#[test]
fn self_queries_find_themselves() {
    let l = lab(1000, 0, 16, 8, 64, 2);
    for r in (0..1000u32).step_by(10) {
        let q = l.data.vector(r);
        let mut s = l.store.session();
        let got = l.index.search_unfiltered(&mut s, &q, 1, 16).unwrap();
        assert_eq!(got[0].rowid, r);
        assert_eq!(got[0].score, 0.0);
    }
}

#[test]
fn recall_is_monotone_in_ef() {
    let l = lab(2000, 100, 16, 8, 64, 3);
    let truths: Vec<_> = l
        .queries
        .iter()
        .map(|q| full_sort(&l.data, q.as_slice(), 10, |_| true))
        .collect();
    let mut last = 0.0;
    for ef in [10, 20, 40, 80] {
        let mut total = 0.0;
        for (q, t) in l.queries.iter().zip(&truths) {
            let mut s = l.store.session();
            total += recall(&l.index.search_unfiltered(&mut s, q, 10, ef).unwrap(), t);
        }
        let mean = total / l.queries.len() as f64;
        assert!(mean >= last, "ef={ef}: {mean} < {last}");
        last = mean;
    }
    assert!(last > 0.9);
}

#[test]
fn every_tuple_fits_one_page_and_layers_respect_lmax() {
    let l = lab(3000, 0, 32, 16, 64, 4);
    let g = PageGeometry::default();
    let lmax = compute_lmax(16, &g).unwrap();
    assert!(l.index.tuple_sizes(&l.store).unwrap().iter().all(|&s| s <= g.usable_bytes));
    assert!(l.index.top_level() <= lmax);
    for layer in 0..=l.index.top_level() {
        let cap = if layer == 0 { 32 } else { 16 };
        assert!(l.index.adjacency(&l.store, layer).unwrap().iter().all(|n| n.len() <= cap));
    }
}

#[test]
fn large_vectors_cap_levels_by_tuple_size() {
    // 1536 floats take 6144 bytes; only a few layers of M=32 slots fit beside them.
    let (data, _) = fvs_lab::synth::generate_split(
        200,
        0,
        1536,
        fvs_lab::synth::Distribution::Uniform,
        DistanceMetric::L2Squared,
        5,
    )
    .unwrap();
    let mut store = PagedStore::new(PageGeometry::default()).unwrap();
    let heap = HeapFile::from_dataset(&mut store, &data).unwrap();
    let p = HnswBuildParams {
        m: 32,
        ef_construction: 32,
        ml: Some(2.0),
        seed: 5,
    };
    let idx = HnswIndex::build(&mut store, &heap, &data, p).unwrap();
    assert!(idx.meta().level_cap < idx.meta().lmax);
    assert!(idx.layout().tuple_bytes(idx.meta().level_cap) <= 8128);
    assert!(idx.tuple_sizes(&store).unwrap().iter().all(|&s| s <= 8128));
}

#[test]
fn layer_occupancy_tracks_one_over_m() {
    let m = 8;
    let mut fracs = Vec::new();
    for seed in 0..3 {
        let l = lab(10_000, 0, 4, m, 16, 100 + seed);
        let above = l.index.adjacency(&l.store, 0).unwrap().len();
        assert_eq!(above, 10_000);
        let mut count = 0;
        for block in 0..l.store.page_count(l.index.file()) as u32 {
            let page = l.store.page(l.index.file(), block).unwrap();
            for slot in 0..page.len() as u16 {
                let tid = fvs_lab::storage::IndexTid(fvs_lab::storage::Tid::new(block, slot));
                if l.index.level_of(&l.store, tid).unwrap() > 0 {
                    count += 1;
                }
            }
        }
        fracs.push(count as f64 / 10_000.0);
    }
    let mean = fracs.iter().sum::<f64>() / fracs.len() as f64;
    let expect = 1.0 / m as f64;
    assert!((mean - expect).abs() <= 0.5 * expect, "mean {mean} vs {expect}");
}

#[test]
fn build_and_search_are_deterministic() {
    let a = lab(1500, 10, 8, 8, 32, 9);
    let b = lab(1500, 10, 8, 8, 32, 9);
    assert_eq!(a.store, b.store);
    for q in &a.queries {
        let mut sa = a.store.session();
        let mut sb = b.store.session();
        assert_eq!(
            a.index.search_unfiltered(&mut sa, q, 10, 40).unwrap(),
            b.index.search_unfiltered(&mut sb, q, 10, 40).unwrap()
        );
        assert_eq!(sa.ledger(), sb.ledger());
    }
}

#[test]
fn search_counts_hops_and_scores() {
    let l = lab(1000, 1, 8, 8, 32, 10);
    let mut s = l.store.session();
    let got = l.index.search_unfiltered(&mut s, &l.queries[0], 10, 20).unwrap();
    let led = s.ledger();
    assert_eq!(got.len(), 10);
    assert!(led.hop > 0);
    // Every scored node is one page read; every expansion is one more.
    assert_eq!(led.page_access, led.hop + led.distance_computation);
    assert!(led.tuple_materialize >= 20);
}
