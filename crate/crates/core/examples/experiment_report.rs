//! A small end-to-end experiment: both indexes, every strategy, tuned per
//! cell to a recall target, then the cost report and crossover.

use fvs_lab::catalog::{IndexSpec, IndexStore};
use fvs_lab::config::{RunConfig, StrategyConfig, StrategyKind};
use fvs_lab::harness::{self, effort_grid};
use fvs_lab::hnsw::HnswBuildParams;
use fvs_lab::scann::ScannBuildParams;
use fvs_lab::storage::{CostWeights, PageGeometry};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::workload::{generate_workload, Correlation, WorkloadSpec};
use fvs_lab::DistanceMetric;

fn main() -> fvs_lab::Result<()> {
    let (data, queries) = synth::generate_split(4_000, 30, 16, Distribution::Uniform, DistanceMetric::L2Squared, 1)?;
    let hnsw = IndexStore::build(
        &data,
        IndexSpec::Hnsw(HnswBuildParams {
            m: 16,
            ef_construction: 100,
            ml: None,
            seed: 1,
        }),
        PageGeometry::default(),
    )?;
    let scann = IndexStore::build(&data, IndexSpec::Scann(ScannBuildParams::default()), PageGeometry::default())?;

    let spec = WorkloadSpec {
        selectivities: vec![0.01, 0.1, 0.3, 0.8],
        correlations: vec![Correlation::None],
        ..WorkloadSpec::full_grid(1)
    };
    let workload = generate_workload(&data, &queries, &spec)?;

    let mut strategies: Vec<StrategyConfig> = StrategyKind::ALL.into_iter().map(StrategyConfig::new).collect();
    for s in strategies.iter_mut().filter(|s| s.strategy.is_graph()) {
        s.grid = Some(effort_grid(10, 1_000));
    }
    let config = RunConfig {
        dataset: "uniform-4k".into(),
        ks: vec![10],
        target_recall: 0.9,
        workers: 4,
        repetitions: 1,
        seed: 1,
        holdout: 0.2,
        weights: None,
        strategies,
    };
    println!("{}", config.to_toml());
    let exp = harness::run_experiment(&config, &workload, Some(&hnsw), Some(&scann))?;
    for t in exp.tuned.iter().filter(|t| t.point.below_target) {
        println!("note: {} at {} stayed at recall {:.3}", t.strategy, t.selectivity, t.point.recall);
    }
    print!("{}", harness::render_report(&exp.rows, &CostWeights::for_dim(16)));

    let out = std::env::temp_dir().join("fvs-lab-experiment.csv");
    harness::write_csv(&out, &exp.rows)?;
    println!("{} rows -> {}", exp.rows.len(), out.display());
    Ok(())
}
