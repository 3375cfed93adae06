//! Build a page-resident HNSW graph and trade beam width for recall.

use fvs_lab::hnsw::{compute_lmax, HnswBuildParams, HnswIndex};
use fvs_lab::storage::{HeapFile, PageGeometry, PagedStore};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::{brute_force_topk, DistanceMetric};

fn main() -> fvs_lab::Result<()> {
    let geometry = PageGeometry::default();
    for m in [16, 32, 40, 80] {
        println!("M={m:<3} highest layer that fits a page: {}", compute_lmax(m, &geometry)?);
    }

    let (data, queries) = synth::generate_split(
        5_000,
        50,
        32,
        Distribution::GaussianMixture {
            components: 40,
            sigma: 0.08,
        },
        DistanceMetric::L2Squared,
        3,
    )?;
    let mut store = PagedStore::new(geometry)?;
    let heap = HeapFile::from_dataset(&mut store, &data)?;
    let params = HnswBuildParams {
        m: 16,
        ef_construction: 100,
        ml: None,
        seed: 3,
    };
    let t = std::time::Instant::now();
    let index = HnswIndex::build(&mut store, &heap, &data, params)?;
    println!(
        "built {} nodes in {:.2?}; top layer {}, base fanout {}",
        index.len(),
        t.elapsed(),
        index.top_level(),
        index.base_fanout()
    );

    let k = 10;
    let truth: Vec<_> = queries
        .iter()
        .map(|q| brute_force_topk(&data, q, k, None))
        .collect::<Result<_, _>>()?;
    println!("{:>5} {:>7} {:>9} {:>9}", "ef", "recall", "pages/q", "dists/q");
    for ef in [10, 20, 40, 80, 160] {
        let mut session = store.session();
        let mut hits = 0;
        for (q, t) in queries.iter().zip(&truth) {
            let got = index.search_unfiltered(&mut session, q, k, ef)?;
            hits += got.iter().filter(|n| t.iter().any(|x| x.rowid == n.rowid)).count();
        }
        let l = session.take_ledger();
        let nq = queries.len() as f64;
        println!(
            "{ef:>5} {:>7.3} {:>9.0} {:>9.0}",
            hits as f64 / (nq * k as f64),
            l.page_access as f64 / nq,
            l.distance_computation as f64 / nq
        );
    }
    Ok(())
}
