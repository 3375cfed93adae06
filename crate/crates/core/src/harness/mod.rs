//! Tuning to a recall target, measuring under a worker pool, and emitting
//! one result row per (cell, strategy, k, repetition).

mod report;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitmap::FilterBitmap;
use crate::catalog::IndexStore;
use crate::config::{substream, RunConfig, StrategyConfig, StrategyKind};
use crate::dataset::{Neighbor, Vector};
use crate::error::{Error, Result};
use crate::filtered::{self, SearchOutcome};
use crate::storage::{weighted_breakdown, CostWeights, EventLedger, PagedStore, Session};
use crate::workload::{Correlation, Workload};

pub use report::{
    breakdown_shares, breakdown_svg, crossover, read_csv, render_report, summarize, write_csv, CellSummary, Family,
};

/// |result ∩ truth| / k over rowids; short results count as misses.
pub fn recall_at_k(result: &[Neighbor], truth: &[Neighbor], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = result
        .iter()
        .take(k)
        .filter(|r| truth.iter().take(k).any(|t| t.rowid == r.rowid))
        .count();
    hits as f64 / k as f64
}

/// A search method the harness can tune and time. `effort` is the knob
/// tuning walks.
pub trait Searcher: Sync {
    fn name(&self) -> String;
    fn store(&self) -> &PagedStore;
    fn knobs(&self, effort: usize) -> String;
    /// Effort values in increasing order.
    fn grid(&self) -> Vec<usize>;
    fn search(
        &self,
        session: &mut Session<'_>,
        q: &Vector,
        bitmap: &FilterBitmap,
        k: usize,
        effort: usize,
    ) -> Result<SearchOutcome>;
}

/// Increasing effort values from `start` up to and including `max`.
pub fn effort_grid(start: usize, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut v = start.max(1);
    while v < max {
        out.push(v);
        // Roughly 1.25x steps, always advancing.
        v = (v + v / 4).max(v + 1);
    }
    out.push(max.max(1));
    out
}

/// A configured strategy over an opened index.
pub struct StrategyRunner<'a> {
    pub config: StrategyConfig,
    store: &'a IndexStore,
}

impl<'a> StrategyRunner<'a> {
    /// Fails when the index kind does not suit the strategy.
    pub fn new(config: StrategyConfig, store: &'a IndexStore) -> Result<Self> {
        let ok = if config.strategy.is_graph() {
            store.hnsw().is_some()
        } else {
            store.scann().is_some()
        };
        if !ok {
            return Err(Error::param(format!(
                "strategy {} needs a {} index",
                config.strategy,
                if config.strategy.is_graph() { "hnsw" } else { "scann" }
            )));
        }
        config.validate()?;
        Ok(Self { config, store })
    }
}

impl Searcher for StrategyRunner<'_> {
    fn name(&self) -> String {
        self.config.name()
    }

    fn store(&self) -> &PagedStore {
        &self.store.store
    }

    fn knobs(&self, effort: usize) -> String {
        self.config.knobs(effort)
    }

    fn grid(&self) -> Vec<usize> {
        if let Some(g) = &self.config.grid {
            return g.clone();
        }
        if let Some(e) = self.config.effort() {
            return vec![e];
        }
        match self.config.strategy {
            StrategyKind::Scann => effort_grid(1, self.store.scann().expect("checked").num_leaves()),
            _ => effort_grid(10, self.store.catalog.n),
        }
    }

    fn search(
        &self,
        session: &mut Session<'_>,
        q: &Vector,
        bitmap: &FilterBitmap,
        k: usize,
        effort: usize,
    ) -> Result<SearchOutcome> {
        let c = &self.config;
        if c.strategy == StrategyKind::Scann {
            let idx = self.store.scann().expect("checked");
            return idx.filtered_search(session, q, bitmap, c.scann(k, effort));
        }
        let idx = self.store.hnsw().expect("checked");
        match c.strategy {
            StrategyKind::Sweeping => filtered::sweeping_search(idx, session, q, bitmap, c.sweeping(k, effort)),
            StrategyKind::Iterative => filtered::iterative_scan(idx, session, q, bitmap, c.iterative(k, effort)),
            StrategyKind::Acorn => {
                let tm = idx.translation_map(c.tm_enabled);
                filtered::acorn_search(idx, session, q, bitmap, &tm, c.acorn(k, effort))
            }
            StrategyKind::Navix => {
                let tm = idx.translation_map(c.tm_enabled);
                filtered::navix_search(idx, session, q, bitmap, &tm, c.navix(k, effort))
            }
            StrategyKind::Scann => unreachable!("handled above"),
        }
    }
}

/// One query of a cell.
#[derive(Debug, Clone, Copy)]
pub struct QueryCase<'a> {
    pub query: &'a Vector,
    pub bitmap: &'a FilterBitmap,
    pub truth: &'a [Neighbor],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub ledger: EventLedger,
    /// Per-query ledgers in case order.
    pub per_query: Vec<EventLedger>,
    pub recall: f64,
    /// Search-call latency per query, in case order.
    pub latencies: Vec<Duration>,
    pub wall: Duration,
    pub truncated: usize,
}

impl Measurement {
    pub fn queries(&self) -> usize {
        self.per_query.len()
    }

    pub fn qps(&self) -> f64 {
        let s = self.wall.as_secs_f64();
        if s > 0.0 {
            self.queries() as f64 / s
        } else {
            f64::INFINITY
        }
    }

    pub fn mean_latency_us(&self) -> f64 {
        let total: f64 = self.latencies.iter().map(|d| d.as_secs_f64() * 1e6).sum();
        total / self.latencies.len().max(1) as f64
    }

    /// Nearest-rank percentile in microseconds.
    pub fn percentile_us(&self, p: f64) -> f64 {
        if self.latencies.is_empty() {
            return 0.0;
        }
        let mut v: Vec<f64> = self.latencies.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        v.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
        v[rank.clamp(1, v.len()) - 1]
    }
}

struct QueryResult {
    index: usize,
    recall: f64,
    ledger: EventLedger,
    latency: Duration,
    truncated: bool,
}

/// Runs every case once with `workers` concurrent sessions pulling from a
/// shared counter. Only the search call is timed.
pub fn measure<S: Searcher + ?Sized>(
    searcher: &S,
    cases: &[QueryCase<'_>],
    k: usize,
    effort: usize,
    workers: usize,
) -> Result<Measurement> {
    if cases.is_empty() {
        return Err(Error::param("no queries to measure"));
    }
    let next = AtomicUsize::new(0);
    let sink: Mutex<Vec<QueryResult>> = Mutex::new(Vec::with_capacity(cases.len()));
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let start = Instant::now();
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(cases.len()) {
            scope.spawn(|| {
                let mut session = searcher.store().session();
                let mut local = Vec::new();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= cases.len() {
                        break;
                    }
                    let c = cases[i];
                    let t = Instant::now();
                    let out = searcher.search(&mut session, c.query, c.bitmap, k, effort);
                    let latency = t.elapsed();
                    let ledger = session.take_ledger();
                    match out {
                        Ok(out) => local.push(QueryResult {
                            index: i,
                            recall: recall_at_k(&out.neighbors, c.truth, k),
                            ledger,
                            latency,
                            truncated: out.truncated,
                        }),
                        Err(e) => {
                            failure.lock().expect("not poisoned").get_or_insert(e);
                            next.store(cases.len(), Ordering::Relaxed);
                            break;
                        }
                    }
                }
                sink.lock().expect("not poisoned").extend(local);
            });
        }
    });
    let wall = start.elapsed();
    if let Some(e) = failure.into_inner().expect("not poisoned") {
        return Err(e);
    }
    let mut results = sink.into_inner().expect("not poisoned");
    results.sort_by_key(|r| r.index);
    let mut ledger = EventLedger::default();
    for r in &results {
        ledger += &r.ledger;
    }
    Ok(Measurement {
        ledger,
        recall: results.iter().map(|r| r.recall).sum::<f64>() / results.len() as f64,
        per_query: results.iter().map(|r| r.ledger).collect(),
        latencies: results.iter().map(|r| r.latency).collect(),
        truncated: results.iter().filter(|r| r.truncated).count(),
        wall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub effort: usize,
    pub recall: f64,
    /// No grid value reached the target; `effort` is the largest tried.
    pub below_target: bool,
}

/// Smallest grid value whose mean recall reaches `target`.
pub fn tune_to_recall(grid: &[usize], target: f64, mut eval: impl FnMut(usize) -> Result<f64>) -> Result<OperatingPoint> {
    let mut last = None;
    for &e in grid {
        let r = eval(e)?;
        if r >= target {
            return Ok(OperatingPoint {
                effort: e,
                recall: r,
                below_target: false,
            });
        }
        last = Some((e, r));
    }
    let (effort, recall) = last.ok_or_else(|| Error::param("empty knob grid"))?;
    Ok(OperatingPoint {
        effort,
        recall,
        below_target: true,
    })
}

/// Tunes `searcher` on `cases` over its own grid.
pub fn tune_searcher<S: Searcher + ?Sized>(
    searcher: &S,
    cases: &[QueryCase<'_>],
    k: usize,
    target: f64,
    workers: usize,
) -> Result<OperatingPoint> {
    if cases.is_empty() {
        return Err(Error::param("cannot tune on an empty query slice"));
    }
    tune_to_recall(&searcher.grid(), target, |e| Ok(measure(searcher, cases, k, e, workers)?.recall))
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub strategy: String,
    pub k: usize,
    pub selectivity: f64,
    pub correlation: Correlation,
    pub knobs: String,
    pub recall: f64,
    pub mean_latency_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub qps: f64,
    pub dist_comps: u64,
    pub filter_checks: u64,
    pub hops: u64,
    pub leaves: u64,
    pub page_accesses: u64,
    pub map_lookups: u64,
    pub materializations: u64,
    pub reorder_fetches: u64,
    pub weighted_total: u64,
    pub truncated_frac: f64,
}

impl MetricsRecord {
    pub const WALL_CLOCK_COLUMNS: [&'static str; 4] = ["mean_latency_us", "p50_us", "p95_us", "qps"];

    pub fn ledger(&self) -> EventLedger {
        EventLedger {
            page_access: self.page_accesses,
            tuple_materialize: self.materializations,
            translation_lookup: self.map_lookups,
            filter_check: self.filter_checks,
            distance_computation: self.dist_comps,
            hop: self.hops,
            leaf_scanned: self.leaves,
            reorder_fetch: self.reorder_fetches,
        }
    }
}

/// A (selectivity, correlation) slice of a workload.
#[derive(Debug, Clone)]
pub struct Cell<'w> {
    pub selectivity: f64,
    pub correlation: Correlation,
    pub records: Vec<&'w crate::workload::WorkloadRecord>,
}

/// Groups records by (selectivity, correlation), in ascending selectivity.
pub fn cells(workload: &Workload) -> Vec<Cell<'_>> {
    let mut map: BTreeMap<(u64, Correlation), Vec<_>> = BTreeMap::new();
    for r in &workload.records {
        map.entry((r.selectivity.to_bits(), r.correlation)).or_default().push(r);
    }
    let mut out: Vec<Cell<'_>> = map
        .into_iter()
        .map(|((s, c), records)| Cell {
            selectivity: f64::from_bits(s),
            correlation: c,
            records,
        })
        .collect();
    out.sort_by(|a, b| a.selectivity.total_cmp(&b.selectivity).then(a.correlation.cmp(&b.correlation)));
    out
}

/// Tuning point for one (cell, strategy, k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedCell {
    pub strategy: String,
    pub k: usize,
    pub selectivity: f64,
    pub correlation: Correlation,
    pub point: OperatingPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub rows: Vec<MetricsRecord>,
    pub tuned: Vec<TunedCell>,
}

impl Experiment {
    pub fn any_below_target(&self) -> bool {
        self.tuned.iter().any(|t| t.point.below_target)
    }
}

/// Splits a cell's cases into (tuning, measured) with a seeded shuffle.
fn split_holdout<'a>(cases: &[QueryCase<'a>], frac: f64, seed: u64) -> (Vec<QueryCase<'a>>, Vec<QueryCase<'a>>) {
    let mut idx: Vec<usize> = (0..cases.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_tune = ((cases.len() as f64 * frac).ceil() as usize).clamp(1, cases.len());
    let tune: Vec<_> = idx[..n_tune].iter().map(|&i| cases[i]).collect();
    let mut rest: Vec<usize> = idx[n_tune..].to_vec();
    rest.sort_unstable();
    let measured = if rest.is_empty() {
        cases.to_vec()
    } else {
        rest.iter().map(|&i| cases[i]).collect()
    };
    (tune, measured)
}

/// Tunes and measures every searcher on every cell and k. With
/// `measure_rows` off only the tuning points are produced.
pub fn run_with(
    config: &RunConfig,
    workload: &Workload,
    searchers: &[&dyn Searcher],
    measure_rows: bool,
) -> Result<Experiment> {
    config.validate()?;
    let queries: Vec<Vector> = (0..workload.header.queries.len() as u32)
        .map(|i| workload.query(i))
        .collect::<Result<_>>()?;
    for &k in &config.ks {
        if !workload.header.ks.contains(&k) {
            return Err(Error::param(format!("workload has no ground truth for k={k}")));
        }
    }
    let weights = config.weights.unwrap_or_else(|| CostWeights::for_dim(workload.header.dim));
    let base = substream(config.seed, "harness");
    let mut exp = Experiment {
        rows: Vec::new(),
        tuned: Vec::new(),
    };
    for cell in cells(workload) {
        let cell_seed = base ^ cell.selectivity.to_bits() ^ u64::from(cell.correlation.code()).rotate_left(56);
        for &k in &config.ks {
            let cases: Vec<QueryCase<'_>> = cell
                .records
                .iter()
                .map(|r| QueryCase {
                    query: &queries[r.query_id as usize],
                    bitmap: &r.bitmap,
                    truth: &r.truth[&k],
                })
                .collect();
            let (tune, measured) = split_holdout(&cases, config.holdout, cell_seed);
            for s in searchers {
                let point = tune_searcher(*s, &tune, k, config.target_recall, config.workers)?;
                if point.below_target {
                    tracing::warn!(
                        strategy = %s.name(),
                        k,
                        selectivity = cell.selectivity,
                        correlation = %cell.correlation,
                        recall = point.recall,
                        "target recall not reached"
                    );
                }
                exp.tuned.push(TunedCell {
                    strategy: s.name(),
                    k,
                    selectivity: cell.selectivity,
                    correlation: cell.correlation,
                    point,
                });
                if !measure_rows {
                    continue;
                }
                for _ in 0..config.repetitions {
                    let m = measure(*s, &measured, k, point.effort, config.workers)?;
                    let l = m.ledger;
                    exp.rows.push(MetricsRecord {
                        dataset: config.dataset.clone(),
                        strategy: s.name(),
                        k,
                        selectivity: cell.selectivity,
                        correlation: cell.correlation,
                        knobs: s.knobs(point.effort),
                        recall: m.recall,
                        mean_latency_us: m.mean_latency_us(),
                        p50_us: m.percentile_us(50.0),
                        p95_us: m.percentile_us(95.0),
                        qps: m.qps(),
                        dist_comps: l.distance_computation,
                        filter_checks: l.filter_check,
                        hops: l.hop,
                        leaves: l.leaf_scanned,
                        page_accesses: l.page_access,
                        map_lookups: l.translation_lookup,
                        materializations: l.tuple_materialize,
                        reorder_fetches: l.reorder_fetch,
                        weighted_total: weighted_breakdown(&l, &weights).total,
                        truncated_frac: m.truncated as f64 / m.queries() as f64,
                    });
                }
            }
        }
    }
    Ok(exp)
}

/// Builds a runner per strategy block, pairing graph strategies with the
/// HNSW store and ScaNN with the ScaNN store.
pub fn runners<'a>(
    config: &RunConfig,
    hnsw: Option<&'a IndexStore>,
    scann: Option<&'a IndexStore>,
) -> Result<Vec<StrategyRunner<'a>>> {
    config
        .strategies
        .iter()
        .map(|s| {
            let store = if s.strategy.is_graph() { hnsw } else { scann };
            let store = store.ok_or_else(|| {
                Error::param(format!("strategy {} has no matching index", s.name()))
            })?;
            StrategyRunner::new(s.clone(), store)
        })
        .collect()
}

pub fn run_experiment(
    config: &RunConfig,
    workload: &Workload,
    hnsw: Option<&IndexStore>,
    scann: Option<&IndexStore>,
) -> Result<Experiment> {
    let rs = runners(config, hnsw, scann)?;
    let dyns: Vec<&dyn Searcher> = rs.iter().map(|r| r as &dyn Searcher).collect();
    run_with(config, workload, &dyns, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(ids: &[u32]) -> Vec<Neighbor> {
        ids.iter().map(|&r| Neighbor::new(r, 0.0)).collect()
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&n(&[1, 2, 3]), &n(&[1, 2, 3]), 3), 1.0);
        assert!((recall_at_k(&n(&[1, 2, 3]), &n(&[1, 2, 4]), 3) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at_k(&[], &n(&[1, 2, 4]), 3), 0.0);
    }

    #[test]
    fn tuning_returns_minimal_point_or_flag() {
        let curve = |e: usize| Ok((e as f64 / 100.0).min(1.0));
        let p = tune_to_recall(&[10, 50, 95, 100], 0.95, curve).unwrap();
        assert_eq!(p.effort, 95);
        assert!(!p.below_target);
        let p = tune_to_recall(&[10, 50], 0.95, curve).unwrap();
        assert!(p.below_target);
        assert_eq!(p.effort, 50);
        assert!(tune_to_recall(&[], 0.95, curve).is_err());
        let exact = tune_to_recall(&[3, 9], 0.95, |_| Ok(1.0)).unwrap();
        assert_eq!((exact.effort, exact.recall), (3, 1.0));
    }

    #[test]
    fn grid_is_increasing_and_capped() {
        let g = effort_grid(10, 1000);
        assert_eq!(g[0], 10);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(effort_grid(1, 1), vec![1]);
        assert_eq!(effort_grid(1, 3), vec![1, 2, 3]);
    }

    #[test]
    fn holdout_split_is_deterministic_and_disjoint() {
        let v = Vector::new(vec![0.0]).unwrap();
        let b = FilterBitmap::full(1);
        let cases: Vec<QueryCase<'_>> = (0..10)
            .map(|_| QueryCase {
                query: &v,
                bitmap: &b,
                truth: &[],
            })
            .collect();
        let (t, m) = split_holdout(&cases, 0.2, 5);
        assert_eq!((t.len(), m.len()), (2, 8));
        let (t1, _) = split_holdout(&cases[..1], 0.2, 5);
        assert_eq!(t1.len(), 1);
    }
}
