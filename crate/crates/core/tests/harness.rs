use std::time::Duration;

use fvs_lab::catalog::{IndexSpec, IndexStore};
use fvs_lab::config::{RunConfig, StrategyConfig, StrategyKind};
use fvs_lab::filtered::SearchOutcome;
use fvs_lab::harness::{self, measure, MetricsRecord, QueryCase, Searcher};
use fvs_lab::hnsw::HnswBuildParams;
use fvs_lab::scann::ScannBuildParams;
use fvs_lab::storage::{PageGeometry, PagedStore, Session};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::workload::{generate_workload, Correlation, Workload, WorkloadSpec};
use fvs_lab::{Dataset, DistanceMetric, FilterBitmap, Result, Vector};

struct Fixture {
    workload: Workload,
    hnsw: IndexStore,
    scann: IndexStore,
}

fn fixture() -> Fixture {
    let (data, queries) =
        synth::generate_split(2000, 10, 16, Distribution::Uniform, DistanceMetric::L2Squared, 21).unwrap();
    let spec = WorkloadSpec {
        selectivities: vec![0.05, 0.5],
        correlations: vec![Correlation::None, Correlation::LowPositive],
        ..WorkloadSpec::full_grid(4)
    };
    let workload = generate_workload(&data, &queries, &spec).unwrap();
    let hnsw = IndexStore::build(
        &data,
        IndexSpec::Hnsw(HnswBuildParams {
            m: 12,
            ef_construction: 64,
            ml: None,
            seed: 2,
        }),
        PageGeometry::default(),
    )
    .unwrap();
    let scann = IndexStore::build(&data, IndexSpec::Scann(ScannBuildParams::default()), PageGeometry::default()).unwrap();
    Fixture { workload, hnsw, scann }
}

fn config(workers: usize) -> RunConfig {
    let mut strategies: Vec<StrategyConfig> = StrategyKind::ALL.into_iter().map(StrategyConfig::new).collect();
    for s in &mut strategies {
        if s.strategy.is_graph() {
            s.grid = Some(vec![10, 20, 40, 80, 160, 2000]);
        }
    }
    RunConfig {
        dataset: "uniform-2k".into(),
        ks: vec![10],
        target_recall: 0.95,
        workers,
        repetitions: 2,
        seed: 9,
        holdout: 0.2,
        weights: None,
        strategies,
    }
}

fn strip_wall_clock(rows: &[MetricsRecord]) -> Vec<MetricsRecord> {
    rows.iter()
        .map(|r| MetricsRecord {
            mean_latency_us: 0.0,
            p50_us: 0.0,
            p95_us: 0.0,
            qps: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn rows_and_ledgers_are_stable_across_worker_counts() {
    let f = fixture();
    let one = harness::run_experiment(&config(1), &f.workload, Some(&f.hnsw), Some(&f.scann)).unwrap();
    let many = harness::run_experiment(&config(4), &f.workload, Some(&f.hnsw), Some(&f.scann)).unwrap();
    // 4 cells x 5 strategies x 1 k x 2 repetitions.
    assert_eq!(one.rows.len(), 4 * 5 * 2);
    assert_eq!(strip_wall_clock(&one.rows), strip_wall_clock(&many.rows));
    assert_eq!(one.tuned, many.tuned);
    for pair in one.rows.chunks(2) {
        assert_eq!(pair[0].ledger(), pair[1].ledger());
    }
    for r in &one.rows {
        assert!((0.0..=1.0).contains(&r.recall));
        assert!(r.qps > 0.0);
    }
    for t in &one.tuned {
        assert!(t.point.below_target || t.point.recall >= 0.95);
    }

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    harness::write_csv(&p, &one.rows).unwrap();
    let back = harness::read_csv(&p).unwrap();
    assert_eq!(back.len(), one.rows.len());
    assert_eq!(strip_wall_clock(&back), strip_wall_clock(&one.rows));
}

#[test]
fn measure_sums_per_query_ledgers() {
    let f = fixture();
    let cfg = config(3);
    let runners = harness::runners(&cfg, Some(&f.hnsw), Some(&f.scann)).unwrap();
    let queries: Vec<Vector> = (0..10).map(|i| f.workload.query(i).unwrap()).collect();
    let cases: Vec<QueryCase<'_>> = f
        .workload
        .records
        .iter()
        .take(8)
        .map(|r| QueryCase {
            query: &queries[r.query_id as usize],
            bitmap: &r.bitmap,
            truth: &r.truth[&10],
        })
        .collect();
    for r in &runners {
        let m = measure(r, &cases, 10, 8, 3).unwrap();
        let mut sum = fvs_lab::storage::EventLedger::default();
        for l in &m.per_query {
            sum += l;
        }
        assert_eq!(sum, m.ledger);
        assert_eq!(m.queries(), 8);
    }
}

#[test]
fn tuned_point_is_minimal() {
    let f = fixture();
    let cfg = config(2);
    let runners = harness::runners(&cfg, Some(&f.hnsw), Some(&f.scann)).unwrap();
    let queries: Vec<Vector> = (0..10).map(|i| f.workload.query(i).unwrap()).collect();
    let cases: Vec<QueryCase<'_>> = f
        .workload
        .records
        .iter()
        .filter(|r| r.selectivity == 0.05 && r.correlation == Correlation::None)
        .map(|r| QueryCase {
            query: &queries[r.query_id as usize],
            bitmap: &r.bitmap,
            truth: &r.truth[&10],
        })
        .collect();
    for r in &runners {
        let p = harness::tune_searcher(r, &cases, 10, 0.95, 2).unwrap();
        let grid = r.grid();
        let pos = grid.iter().position(|&g| g == p.effort).unwrap();
        if !p.below_target && pos > 0 {
            assert!(measure(r, &cases, 10, grid[pos - 1], 2).unwrap().recall < 0.95);
        }
        assert!(harness::tune_searcher(r, &[], 10, 0.95, 2).is_err());
    }
}

/// Returns immediately or after a fixed sleep; used to check what the timer covers.
struct Fake {
    store: PagedStore,
    sleep: Option<Duration>,
}

impl Searcher for Fake {
    fn name(&self) -> String {
        "fake".into()
    }

    fn store(&self) -> &PagedStore {
        &self.store
    }

    fn knobs(&self, _: usize) -> String {
        String::new()
    }

    fn grid(&self) -> Vec<usize> {
        vec![1]
    }

    fn search(&self, _: &mut Session<'_>, _: &Vector, _: &FilterBitmap, _: usize, _: usize) -> Result<SearchOutcome> {
        if let Some(d) = self.sleep {
            std::thread::sleep(d);
        }
        Ok(SearchOutcome::default())
    }
}

#[test]
fn timer_covers_only_the_search_call() {
    let v = Vector::new(vec![0.0; 4]).unwrap();
    let b = FilterBitmap::full(10);
    let cases: Vec<QueryCase<'_>> = (0..20)
        .map(|_| QueryCase {
            query: &v,
            bitmap: &b,
            truth: &[],
        })
        .collect();
    let noop = Fake {
        store: PagedStore::new(PageGeometry::default()).unwrap(),
        sleep: None,
    };
    let slow = Fake {
        store: PagedStore::new(PageGeometry::default()).unwrap(),
        sleep: Some(Duration::from_millis(2)),
    };
    let a = measure(&noop, &cases, 1, 1, 2).unwrap();
    let b = measure(&slow, &cases, 1, 1, 2).unwrap();
    assert!(b.mean_latency_us() >= 2000.0);
    assert!(a.mean_latency_us() * 20.0 < b.mean_latency_us());
}

#[test]
fn scann_on_gaussian_mixture_is_exact_at_full_scan() {
    let (data, queries) = synth::generate_split(
        3000,
        20,
        16,
        Distribution::GaussianMixture {
            components: 50,
            sigma: 0.05,
        },
        DistanceMetric::L2Squared,
        3,
    )
    .unwrap();
    let store = IndexStore::build(&data, IndexSpec::Scann(ScannBuildParams::default()), PageGeometry::default()).unwrap();
    let idx = store.scann().unwrap();
    let all = FilterBitmap::full(3000);
    let params = StrategyConfig::new(StrategyKind::Scann).scann(10, idx.num_leaves());
    for q in &queries {
        let out = idx.filtered_search(&mut store.store.session(), q, &all, params).unwrap();
        let truth = fvs_lab::brute_force_topk(&data, q, 10, None).unwrap();
        assert_eq!(harness::recall_at_k(&out.neighbors, &truth, 10), 1.0);
    }
}

#[test]
fn mismatched_index_is_rejected() {
    let data = Dataset::from_rows(DistanceMetric::L2Squared, [[0.0f32, 1.0], [1.0, 0.0], [2.0, 2.0]]).unwrap();
    let scann = IndexStore::build(
        &data,
        IndexSpec::Scann(ScannBuildParams {
            num_leaves: Some(1),
            ..Default::default()
        }),
        PageGeometry::default(),
    )
    .unwrap();
    let cfg = config(1);
    assert!(harness::runners(&cfg, None, Some(&scann)).is_err());
    assert!(harness::StrategyRunner::new(StrategyConfig::new(StrategyKind::Acorn), &scann).is_err());
}
