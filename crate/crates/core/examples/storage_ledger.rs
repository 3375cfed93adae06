//! Heap pages and the event ledger: every fetch, score and materialization
//! is counted, then priced with per-event weights.

use fvs_lab::storage::{weighted_breakdown, CostWeights, HeapFile, PageGeometry, PagedStore};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::DistanceMetric;

fn main() -> fvs_lab::Result<()> {
    let dim = 64;
    let data = synth::generate(5_000, dim, Distribution::Uniform, DistanceMetric::L2Squared, 7)?;
    let geometry = PageGeometry::default();
    let mut store = PagedStore::new(geometry)?;
    let heap = HeapFile::from_dataset(&mut store, &data)?;

    let per_page = HeapFile::tuples_per_page(dim, geometry.usable_bytes);
    println!(
        "{} rows of {} bytes, {per_page} per {}-byte page, {} heap pages",
        heap.len(),
        HeapFile::tuple_bytes(dim),
        geometry.page_size_bytes,
        heap.len().div_ceil(per_page)
    );

    // Score the first 300 rows against row 0, then materialize the nearest.
    let q = data.vector(0);
    let mut session = store.session();
    let mut best = (f32::INFINITY, 0);
    for rowid in 0..300 {
        let tid = heap.tid_of(rowid).expect("row stored");
        let score = heap.fetch(&mut session, tid)?.score(data.metric(), q.as_slice());
        if rowid != 0 && score < best.0 {
            best = (score, rowid);
        }
    }
    let tid = heap.tid_of(best.1).expect("row stored");
    let v = heap.fetch(&mut session, tid)?.materialize()?;
    println!("nearest of the first 300 to row 0: row {} at {:.3} ({} dims)", best.1, best.0, v.dim());

    let ledger = session.take_ledger();
    println!("{ledger:?}");
    let weights = CostWeights::for_dim(dim);
    let b = weighted_breakdown(&ledger, &weights);
    let names = ["page", "materialize", "map", "filter", "distance", "hop", "leaf", "reorder"];
    for (name, f) in names.iter().zip(b.fractions()) {
        if f > 0.0 {
            println!("{name:>12} {:5.1}%", 100.0 * f);
        }
    }
    println!("{:>12} {}", "total", b.total);
    Ok(())
}
