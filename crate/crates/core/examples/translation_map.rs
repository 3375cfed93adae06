//! Two-hop expansion with and without the in-memory indextid -> heaptid
//! map. Results stay identical; only page traffic moves.

use fvs_lab::filtered::{acorn_search, AcornParams};
use fvs_lab::hnsw::{HnswBuildParams, HnswIndex};
use fvs_lab::storage::{HeapFile, PageGeometry, PagedStore};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::workload::{generate_bitmap, rank_all, Correlation, DEFAULT_TAU};
use fvs_lab::DistanceMetric;

fn main() -> fvs_lab::Result<()> {
    let (data, queries) = synth::generate_split(5_000, 20, 16, Distribution::Uniform, DistanceMetric::L2Squared, 5)?;
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
            seed: 5,
        },
    )?;
    let fanout = index.base_fanout() as u64;
    for s in [0.02, 0.05, 0.2] {
        let mut row = Vec::new();
        for enabled in [true, false] {
            let tm = index.translation_map(enabled);
            let mut session = store.session();
            let mut worst = 0;
            for (i, q) in queries.iter().enumerate() {
                let bm = generate_bitmap(&rank_all(&data, q)?, s, Correlation::None, i as u64, DEFAULT_TAU)?;
                let p = AcornParams {
                    adaptive_skip: false,
                    ..AcornParams::new(10, 40)
                };
                worst = worst.max(acorn_search(&index, &mut session, q, &bm, &tm, p)?.max_expansion_pages);
            }
            row.push((session.take_ledger(), worst));
        }
        let ((on, w_on), (off, w_off)) = (row[0], row[1]);
        println!(
            "{:>4}%: pages {} with map, {} without (+{}; map lookups {}); worst expansion {w_on} vs {w_off} pages (bounds {} / {})",
            s * 100.0,
            on.page_access,
            off.page_access,
            off.page_access - on.page_access,
            on.translation_lookup,
            1 + fanout,
            1 + fanout + fanout * fanout
        );
    }
    Ok(())
}
