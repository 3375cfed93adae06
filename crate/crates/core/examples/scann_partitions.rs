//! Partitioned search: k-means leaves on pages, flat or two-level roots,
//! full vectors or SQ8 codes with heap reordering.

use fvs_lab::scann::{ScannBuildParams, ScannIndex, ScannSearchParams};
use fvs_lab::storage::{HeapFile, PageGeometry, PagedStore};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::workload::{generate_bitmap, rank_all, Correlation, DEFAULT_TAU};
use fvs_lab::DistanceMetric;

fn main() -> fvs_lab::Result<()> {
    let dist = Distribution::GaussianMixture {
        components: 60,
        sigma: 0.06,
    };
    let (data, queries) = synth::generate_split(8_000, 30, 32, dist, DistanceMetric::L2Squared, 9)?;
    let variants = [
        ("flat", 1, false),
        ("flat+sq8", 1, true),
        ("two-level", 2, false),
    ];
    for (label, levels, quantize) in variants {
        let mut store = PagedStore::new(PageGeometry::default())?;
        let heap = HeapFile::from_dataset(&mut store, &data)?;
        let params = ScannBuildParams {
            max_num_levels: levels,
            quantize,
            seed: 9,
            ..Default::default()
        };
        let index = ScannIndex::build(&mut store, &heap, &data, params)?;
        println!(
            "{label}: {} leaves, {} bytes per entry",
            index.num_leaves(),
            index.entry_bytes()
        );
        for leaves in [2, 8, 32] {
            let mut session = store.session();
            let mut hits = 0;
            for (i, q) in queries.iter().enumerate() {
                let ranked = rank_all(&data, q)?;
                let bm = generate_bitmap(&ranked, 0.1, Correlation::None, i as u64, DEFAULT_TAU)?;
                let truth = ranked.filtered_topk(&bm, 10);
                let p = ScannSearchParams {
                    k: 10,
                    leaves_to_scan: leaves,
                    reorder_factor: if quantize { 4 } else { 1 },
                };
                let out = index.filtered_search(&mut session, q, &bm, p)?;
                hits += out.neighbors.iter().filter(|n| truth.iter().any(|t| t.rowid == n.rowid)).count();
            }
            let l = session.take_ledger();
            let nq = queries.len() as f64;
            println!(
                "  leaves {leaves:>3}: recall {:.3}, checks {:.0}, dists {:.0}, pages {:.0}, reorder {:.0}",
                hits as f64 / (nq * 10.0),
                l.filter_check as f64 / nq,
                l.distance_computation as f64 / nq,
                l.page_access as f64 / nq,
                l.reorder_fetch as f64 / nq
            );
        }
    }
    Ok(())
}
