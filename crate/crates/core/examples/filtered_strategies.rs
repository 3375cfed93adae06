//! The four graph strategies on one index, across selectivities, at a
//! fixed beam width.

use fvs_lab::filtered::{
    acorn_search, iterative_scan, navix_search, sweeping_search, AcornParams, IterativeParams, NavixParams,
    SweepingParams,
};
use fvs_lab::hnsw::{HnswBuildParams, HnswIndex};
use fvs_lab::storage::{HeapFile, PageGeometry, PagedStore};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::workload::{generate_bitmap, rank_all, Correlation, DEFAULT_TAU};
use fvs_lab::DistanceMetric;

fn main() -> fvs_lab::Result<()> {
    let (data, queries) = synth::generate_split(5_000, 30, 16, Distribution::Uniform, DistanceMetric::L2Squared, 11)?;
    let mut store = PagedStore::new(PageGeometry::default())?;
    let heap = HeapFile::from_dataset(&mut store, &data)?;
    let index = HnswIndex::build(
        &mut store,
        &heap,
        &data,
        HnswBuildParams {
            m: 16,
            ef_construction: 100,
            ml: None,
            seed: 11,
        },
    )?;
    let tm = index.translation_map(true);
    let (k, ef) = (10, 64);

    println!("{:>6} {:>10} {:>7} {:>8} {:>8} {:>7}", "sel", "strategy", "recall", "dists", "checks", "pages");
    for s in [0.01, 0.1, 0.5, 0.9] {
        let cases: Vec<_> = queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let ranked = rank_all(&data, q)?;
                let bm = generate_bitmap(&ranked, s, Correlation::None, i as u64, DEFAULT_TAU)?;
                let truth = ranked.filtered_topk(&bm, k);
                Ok((q, bm, truth))
            })
            .collect::<fvs_lab::Result<_>>()?;
        for name in ["sweeping", "iterative", "acorn", "navix"] {
            let mut session = store.session();
            let mut hits = 0;
            for (q, bm, truth) in &cases {
                let out = match name {
                    "sweeping" => sweeping_search(&index, &mut session, q, bm, SweepingParams::new(k, ef))?,
                    "iterative" => iterative_scan(&index, &mut session, q, bm, IterativeParams::new(k, ef))?,
                    "acorn" => acorn_search(&index, &mut session, q, bm, &tm, AcornParams::new(k, ef))?,
                    _ => navix_search(&index, &mut session, q, bm, &tm, NavixParams::new(k, ef))?,
                };
                hits += out.neighbors.iter().filter(|n| truth.iter().any(|t| t.rowid == n.rowid)).count();
            }
            let l = session.take_ledger();
            let nq = cases.len() as f64;
            println!(
                "{:>5}% {name:>10} {:>7.3} {:>8.0} {:>8.0} {:>7.0}",
                s * 100.0,
                hits as f64 / (nq * k as f64),
                l.distance_computation as f64 / nq,
                l.filter_check as f64 / nq,
                l.page_access as f64 / nq
            );
        }
    }
    Ok(())
}
