mod common;

use common::{full_sort, recall};
use fvs_lab::scann::{ScannBuildParams, ScannIndex, ScannSearchParams};
use fvs_lab::storage::{HeapFile, PageGeometry, PagedStore};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::{Dataset, DistanceMetric, FilterBitmap, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    store: PagedStore,
    data: Dataset,
    queries: Vec<Vector>,
    index: ScannIndex,
}

fn setup(n: usize, nq: usize, dim: usize, params: ScannBuildParams) -> Setup {
    let (data, queries) =
        synth::generate_split(n, nq, dim, Distribution::Uniform, DistanceMetric::L2Squared, 11).unwrap();
    let mut store = PagedStore::new(PageGeometry::default()).unwrap();
    let heap = HeapFile::from_dataset(&mut store, &data).unwrap();
    let index = ScannIndex::build(&mut store, &heap, &data, params).unwrap();
    Setup {
        store,
        data,
        queries,
        index,
    }
}

fn random_bitmap(n: usize, s: f64, seed: u64) -> FilterBitmap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep: Vec<u32> = (0..n as u32).filter(|_| rng.random::<f64>() < s).collect();
    FilterBitmap::from_rowids(n, keep)
}

fn sp(k: usize, leaves: usize, rf: usize) -> ScannSearchParams {
    ScannSearchParams {
        k,
        leaves_to_scan: leaves,
        reorder_factor: rf,
    }
}

#[test]
fn singleton_leaves_are_exact() {
    let params = ScannBuildParams {
        num_leaves: Some(100),
        ..Default::default()
    };
    let s = setup(100, 10, 8, params);
    let bm = random_bitmap(100, 0.5, 1);
    for q in &s.queries {
        let mut session = s.store.session();
        let out = s.index.filtered_search(&mut session, q, &bm, sp(5, 100, 1)).unwrap();
        assert_eq!(out.neighbors, full_sort(&s.data, q.as_slice(), 5, |r| bm.probe(r)));
        assert_eq!(session.ledger().leaf_scanned, 100);
    }
}

#[test]
fn exhaustive_unfiltered_equals_brute_force() {
    for levels in [1, 2] {
        let params = ScannBuildParams {
            max_num_levels: levels,
            ..Default::default()
        };
        let s = setup(2000, 20, 16, params);
        let all = FilterBitmap::full(2000);
        let l = s.index.num_leaves();
        for q in &s.queries {
            let mut session = s.store.session();
            let out = s.index.filtered_search(&mut session, q, &all, sp(10, l, 1)).unwrap();
            assert_eq!(out.neighbors, full_sort(&s.data, q.as_slice(), 10, |_| true));
            assert!(!out.truncated);
        }
    }
}

#[test]
fn blobs_assign_to_own_centroid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sigma = 0.1f32;
    let rows: Vec<Vec<f32>> = (0..600)
        .map(|i| {
            let c = if i % 2 == 0 { 0.0 } else { 10.0 * sigma * 4.0 };
            (0..8).map(|_| c + sigma * (rng.random::<f32>() - 0.5) * 2.0).collect()
        })
        .collect();
    let data = Dataset::from_rows(DistanceMetric::L2Squared, rows.iter()).unwrap();
    let mut store = PagedStore::new(PageGeometry::default()).unwrap();
    let heap = HeapFile::from_dataset(&mut store, &data).unwrap();
    let params = ScannBuildParams {
        num_leaves: Some(2),
        ..Default::default()
    };
    let index = ScannIndex::build(&mut store, &heap, &data, params).unwrap();
    let a = index.leaf_members(&store, 0).unwrap();
    let b = index.leaf_members(&store, 1).unwrap();
    assert_eq!(a.len() + b.len(), 600);
    let parity = a[0] % 2;
    assert!(a.iter().all(|r| r % 2 == parity));
    assert!(b.iter().all(|r| r % 2 != parity));
}

#[test]
fn leaves_partition_rows_and_pages_are_packed() {
    let s = setup(3000, 1, 32, ScannBuildParams::default());
    let per_page = s.store.geometry().usable_bytes / s.index.entry_bytes();
    let mut seen = vec![false; 3000];
    let meta = s.index.meta();
    for leaf in 0..s.index.num_leaves() {
        let m = s.index.leaf_members(&s.store, leaf).unwrap();
        assert_eq!(m.len(), meta.leaf_sizes[leaf] as usize);
        assert_eq!(meta.leaf_pages[leaf] as usize, m.len().div_ceil(per_page));
        for r in m {
            assert!(!seen[r as usize]);
            seen[r as usize] = true;
        }
        let mut next = meta.leaf_heads[leaf];
        let mut counts = Vec::new();
        while let Some(b) = next {
            let p = s.store.page(meta.leaf_file, b).unwrap();
            counts.push(p.len());
            next = p.next();
        }
        let (last, full) = counts.split_last().unwrap();
        assert!(full.iter().all(|&c| c == per_page));
        assert!(*last >= 1 && *last <= per_page);
    }
    assert!(seen.iter().all(|&x| x));
}

#[test]
fn filter_checks_constant_and_distances_rise_with_selectivity() {
    let s = setup(5000, 30, 16, ScannBuildParams::default());
    let leaves = 8;
    let mut prev_dist = 0u64;
    let mut checks = None;
    for (i, sel) in [0.01, 0.10, 0.50, 0.90].into_iter().enumerate() {
        let bm = random_bitmap(5000, sel, 100 + i as u64);
        let mut dist = 0u64;
        let mut chk = Vec::new();
        for q in &s.queries {
            let mut session = s.store.session();
            s.index.filtered_search(&mut session, q, &bm, sp(10, leaves, 1)).unwrap();
            let l = session.ledger();
            dist += l.distance_computation;
            chk.push(l.filter_check);
        }
        match &checks {
            None => checks = Some(chk),
            Some(c) => assert_eq!(c, &chk),
        }
        assert!(dist > prev_dist, "distance count must rise with selectivity");
        prev_dist = dist;
    }
}

/// Independent leaf choice: read every centroid tuple and rank by exact distance.
fn oracle_leaves(s: &Setup, q: &[f32], budget: usize) -> Vec<usize> {
    let meta = s.index.meta();
    let mut ranked = Vec::new();
    let mut id = 0usize;
    for b in 0..s.store.page_count(meta.centroid_file) as u32 {
        let p = s.store.page(meta.centroid_file, b).unwrap();
        for slot in 0..p.len() as u16 {
            let c: Vec<f32> = p
                .tuple(slot)
                .unwrap()
                .chunks_exact(4)
                .map(|x| f32::from_le_bytes(x.try_into().unwrap()))
                .collect();
            let d: f32 = c.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            ranked.push((d, id));
            id += 1;
        }
    }
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    ranked.into_iter().take(budget).map(|x| x.1).collect()
}

#[test]
fn filter_checks_equal_members_of_opened_leaves() {
    let s = setup(4000, 10, 16, ScannBuildParams::default());
    let bm = random_bitmap(4000, 0.2, 3);
    let meta = s.index.meta();
    let centroid_pages = s.store.page_count(meta.centroid_file) as u64;
    for q in &s.queries {
        let mut session = s.store.session();
        s.index.filtered_search(&mut session, q, &bm, sp(10, 5, 1)).unwrap();
        let l = session.ledger();
        let opened = oracle_leaves(&s, q.as_slice(), 5);
        let members: u64 = opened.iter().map(|&x| meta.leaf_sizes[x] as u64).sum();
        let chain: u64 = opened.iter().map(|&x| meta.leaf_pages[x] as u64).sum();
        let passers: u64 = opened
            .iter()
            .flat_map(|&x| s.index.leaf_members(&s.store, x).unwrap())
            .filter(|&r| bm.probe(r))
            .count() as u64;
        assert_eq!(l.leaf_scanned, 5);
        assert_eq!(l.filter_check, members);
        assert_eq!(l.page_access, centroid_pages + chain);
        assert_eq!(l.distance_computation, s.index.num_leaves() as u64 + passers);
    }
}

#[test]
fn quantized_with_full_reorder_matches_exact_on_same_leaves() {
    let exact = setup(3000, 20, 16, ScannBuildParams::default());
    let quant = setup(
        3000,
        20,
        16,
        ScannBuildParams {
            quantize: true,
            ..Default::default()
        },
    );
    let bm = random_bitmap(3000, 0.3, 9);
    for (qe, qq) in exact.queries.iter().zip(&quant.queries) {
        let mut a = exact.store.session();
        let mut b = quant.store.session();
        let e = exact.index.filtered_search(&mut a, qe, &bm, sp(10, 6, 1)).unwrap();
        let q = quant.index.filtered_search(&mut b, qq, &bm, sp(10, 6, 10_000)).unwrap();
        assert_eq!(e.neighbors, q.neighbors);
    }
}

#[test]
fn reorder_fetches_count_candidates_and_distinct_heap_pages() {
    let params = ScannBuildParams {
        quantize: true,
        ..Default::default()
    };
    let s = setup(1000, 10, 16, params);
    let all = FilterBitmap::full(1000);
    let meta = s.index.meta();
    let cb = meta.codebook.as_ref().unwrap();
    let per_heap_page = HeapFile::tuples_per_page(16, s.store.geometry().usable_bytes);
    let centroid_pages = s.store.page_count(meta.centroid_file) as u64;
    for q in &s.queries {
        let mut session = s.store.session();
        let out = s.index.filtered_search(&mut session, q, &all, sp(5, 4, 4)).unwrap();
        let l = session.ledger();
        assert_eq!(l.reorder_fetch, 20);
        let opened = oracle_leaves(&s, q.as_slice(), 4);
        let mut cands: Vec<(f32, u32)> = opened
            .iter()
            .flat_map(|&x| s.index.leaf_members(&s.store, x).unwrap())
            .map(|r| (cb.score(DistanceMetric::L2Squared, q.as_slice(), &cb.encode(s.data.row(r))), r))
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        cands.truncate(20);
        let mut heap_pages: Vec<usize> = cands.iter().map(|c| c.1 as usize / per_heap_page).collect();
        heap_pages.sort_unstable();
        heap_pages.dedup();
        let chain: u64 = opened.iter().map(|&x| meta.leaf_pages[x] as u64).sum();
        assert_eq!(l.page_access, centroid_pages + chain + heap_pages.len() as u64);
        assert_eq!(out.neighbors.len(), 5);
    }
}

#[test]
fn truncated_when_too_few_pass() {
    let s = setup(1000, 1, 8, ScannBuildParams::default());
    let bm = FilterBitmap::from_rowids(1000, [3, 7]);
    let mut session = s.store.session();
    let out = s.index.filtered_search(&mut session, &s.queries[0], &bm, sp(10, 1, 1)).unwrap();
    assert!(out.truncated);
    assert!(out.neighbors.len() <= 2);
}

#[test]
fn recall_rises_with_leaf_budget() {
    let s = setup(4000, 40, 16, ScannBuildParams::default());
    let bm = random_bitmap(4000, 0.3, 2);
    let mut prev = 0.0;
    for leaves in [1, 2, 4, 8, 16, 63] {
        let mut total = 0.0;
        for q in &s.queries {
            let mut session = s.store.session();
            let out = s.index.filtered_search(&mut session, q, &bm, sp(10, leaves, 1)).unwrap();
            total += recall(&out.neighbors, &full_sort(&s.data, q.as_slice(), 10, |r| bm.probe(r)));
        }
        let mean = total / s.queries.len() as f64;
        assert!(mean + 1e-12 >= prev, "recall fell at {leaves} leaves");
        prev = mean;
    }
    assert_eq!(prev, 1.0);
}

#[test]
fn invalid_params_rejected() {
    let (data, _) = synth::generate_split(50, 1, 4, Distribution::Uniform, DistanceMetric::L2Squared, 1).unwrap();
    let mut store = PagedStore::new(PageGeometry::default()).unwrap();
    let heap = HeapFile::from_dataset(&mut store, &data).unwrap();
    let too_many = ScannBuildParams {
        num_leaves: Some(51),
        ..Default::default()
    };
    assert!(ScannIndex::build(&mut store, &heap, &data, too_many).is_err());
    let s = setup(100, 1, 4, ScannBuildParams::default());
    let mut session = s.store.session();
    let all = FilterBitmap::full(100);
    assert!(s.index.filtered_search(&mut session, &s.queries[0], &all, sp(1, 0, 1)).is_err());
    assert!(s.index.filtered_search(&mut session, &s.queries[0], &all, sp(1, 1, 0)).is_err());
}
