use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fvs_lab::catalog::{IndexSpec, IndexStore};
use fvs_lab::config::{substream, RunConfig};
use fvs_lab::harness::{self, Experiment};
use fvs_lab::hnsw::HnswBuildParams;
use fvs_lab::io::{read_dataset, write_fvecs, write_raw};
use fvs_lab::scann::ScannBuildParams;
use fvs_lab::storage::{CostWeights, PageGeometry};
use fvs_lab::synth::{self, Distribution};
use fvs_lab::workload::{generate_workload, read_workload, write_workload, Correlation, WorkloadFormat, WorkloadSpec};
use fvs_lab::{Dataset, DistanceMetric, Error};

#[derive(Parser)]
#[command(name = "fvslab", version, about = "Filtered vector search lab over an emulated page store")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (and optionally a query set).
    GenData(GenData),
    /// Convert an external dataset into the raw format, optionally truncated.
    Ingest(Ingest),
    /// Build an index into a content-addressed storage file.
    Build(Build),
    /// Generate bitmaps and ground truth for every query/selectivity/correlation.
    Workload(WorkloadCmd),
    /// Tune every strategy per cell, then measure it.
    Run(RunCmd),
    /// Tune only and print the operating points.
    Tune(RunCmd),
    /// Summarize a results CSV.
    Report(Report),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Metric {
    L2,
    Ip,
}

impl From<Metric> for DistanceMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::L2 => DistanceMetric::L2Squared,
            Metric::Ip => DistanceMetric::InnerProduct,
        }
    }
}

#[derive(Args, Serialize)]
struct GenData {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dim: usize,
    /// uniform | gaussian-mixture
    #[arg(long, default_value = "uniform")]
    distribution: String,
    #[arg(long, default_value_t = 50)]
    components: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma: f32,
    #[arg(long, value_enum, default_value = "l2")]
    metric: Metric,
    #[arg(long, default_value_t = 0, env = "FVS_SEED")]
    seed: u64,
    /// `.fvecs` or raw float32 with a `.json` sidecar.
    #[arg(long)]
    out: PathBuf,
    /// Number of held-out query vectors drawn from the same distribution.
    #[arg(long, default_value_t = 0)]
    queries: usize,
    #[arg(long)]
    queries_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct Ingest {
    #[arg(long)]
    input: PathBuf,
    /// Metric to record; `.fvecs` does not carry one.
    #[arg(long, value_enum, default_value = "l2")]
    metric: Metric,
    /// Keep only the first rows.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum IndexKind {
    Hnsw,
    Scann,
}

#[derive(Args, Serialize)]
struct Build {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "l2")]
    metric: Metric,
    #[arg(long, value_enum)]
    index: IndexKind,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    ef_construction: usize,
    /// Defaults to round(sqrt(N)).
    #[arg(long)]
    num_leaves: Option<usize>,
    #[arg(long, default_value_t = 1)]
    levels: usize,
    #[arg(long, default_value_t = 10)]
    kmeans_iters: usize,
    #[arg(long)]
    quantize: bool,
    #[arg(long, default_value_t = 8192)]
    page_size: usize,
    #[arg(long, default_value_t = 0, env = "FVS_SEED")]
    seed: u64,
    #[arg(long, default_value = ".", env = "FVS_INDEX_DIR")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct WorkloadCmd {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "l2")]
    metric: Metric,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.2,0.3,0.5,0.7,0.8,0.9")]
    selectivities: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "high_positive,medium_positive,low_positive,negative,none"
    )]
    correlations: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = fvs_lab::workload::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 0, env = "FVS_SEED")]
    seed: u64,
    /// `.bin` for the binary form, anything else for JSON lines.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RunCmd {
    /// TOML run configuration with one or more [[strategy]] blocks.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "FVS_WORKLOAD")]
    workload: PathBuf,
    #[arg(long, env = "FVS_HNSW")]
    hnsw: Option<PathBuf>,
    #[arg(long, env = "FVS_SCANN")]
    scann: Option<PathBuf>,
    #[arg(long, env = "FVS_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results.csv", env = "FVS_OUT")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct Report {
    #[arg(long)]
    csv: PathBuf,
    /// Vector dimension used for the default cost weights.
    #[arg(long, default_value_t = 128)]
    dim: usize,
    /// Directory for one breakdown SVG per (correlation, k).
    #[arg(long)]
    svg_dir: Option<PathBuf>,
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::GraphInfeasible { .. } | Error::TupleTooLarge { .. } => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: msg.into(),
    }
}

/// Prints the effective configuration before any work happens.
fn banner(name: &str, args: &impl Serialize) {
    println!("# fvslab {name}");
    match toml::to_string(args) {
        Ok(t) => {
            for line in t.lines() {
                println!("#   {line}");
            }
        }
        Err(e) => println!("#   (config not printable: {e})"),
    }
}

fn save_dataset(path: &Path, ds: &Dataset) -> Result<(), Failure> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("fvecs") => write_fvecs(path, ds)?,
        _ => write_raw(path, ds)?,
    }
    Ok(())
}

fn gen_data(a: GenData) -> Result<(), Failure> {
    banner("gen-data", &a);
    let dist = match a.distribution.parse::<Distribution>()? {
        Distribution::GaussianMixture { .. } => Distribution::GaussianMixture {
            components: a.components,
            sigma: a.sigma,
        },
        d => d,
    };
    let seed = substream(a.seed, "data");
    let (ds, queries) = synth::generate_split(a.n, a.queries, a.dim, dist, a.metric.into(), seed)?;
    save_dataset(&a.out, &ds)?;
    println!("dataset {} rows x {} dims -> {} ({})", ds.len(), ds.dim(), a.out.display(), ds.content_hash());
    if a.queries > 0 {
        let qpath = a
            .queries_out
            .as_ref()
            .ok_or_else(|| config_error("--queries needs --queries-out"))?;
        let rows: Vec<&[f32]> = queries.iter().map(|q| q.as_slice()).collect();
        let qs = Dataset::from_rows(ds.metric(), rows)?;
        save_dataset(qpath, &qs)?;
        println!("queries {} -> {}", qs.len(), qpath.display());
    }
    Ok(())
}

fn ingest(a: Ingest) -> Result<(), Failure> {
    banner("ingest", &a);
    let mut ds = read_dataset(&a.input, a.metric.into())?;
    if let Some(limit) = a.limit {
        if limit == 0 || limit > ds.len() {
            return Err(config_error(format!("--limit must be in 1..={}", ds.len())));
        }
        let flat = ds.as_flat()[..limit * ds.dim()].to_vec();
        ds = Dataset::from_flat(ds.dim(), ds.metric(), flat)?;
    }
    save_dataset(&a.out, &ds)?;
    println!("ingested {} rows x {} dims -> {} ({})", ds.len(), ds.dim(), a.out.display(), ds.content_hash());
    Ok(())
}

fn build(a: Build) -> Result<(), Failure> {
    banner("build", &a);
    let ds = read_dataset(&a.data, a.metric.into())?;
    let seed = substream(a.seed, "build");
    let spec = match a.index {
        IndexKind::Hnsw => IndexSpec::Hnsw(HnswBuildParams {
            m: a.m,
            ef_construction: a.ef_construction,
            ml: None,
            seed,
        }),
        IndexKind::Scann => IndexSpec::Scann(ScannBuildParams {
            num_leaves: a.num_leaves,
            max_num_levels: a.levels,
            kmeans_iters: a.kmeans_iters,
            quantize: a.quantize,
            seed,
        }),
    };
    let geometry = PageGeometry::with_page_size(a.page_size)?;
    let path = a.out_dir.join(spec.file_name(&ds.content_hash(), &geometry));
    if path.exists() {
        IndexStore::load(&path)?;
        println!("index up to date: {}", path.display());
        return Ok(());
    }
    let t = std::time::Instant::now();
    let store = IndexStore::build(&ds, spec, geometry)?;
    std::fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    store.save(&path)?;
    let pages: usize = store.store.files().iter().map(|f| f.pages().len()).sum();
    println!("built {} over {} rows in {:.2?}, {} pages -> {}", spec.kind(), ds.len(), t.elapsed(), pages, path.display());
    Ok(())
}

fn workload(a: WorkloadCmd) -> Result<(), Failure> {
    banner("workload", &a);
    let ds = read_dataset(&a.data, a.metric.into())?;
    let qs = read_dataset(&a.queries, a.metric.into())?;
    let queries: Vec<_> = (0..qs.len() as u32).map(|i| qs.vector(i)).collect();
    let correlations = a
        .correlations
        .iter()
        .map(|c| c.parse::<Correlation>())
        .collect::<Result<Vec<_>, _>>()?;
    let spec = WorkloadSpec {
        selectivities: a.selectivities.clone(),
        correlations,
        ks: a.ks.clone(),
        seed: substream(a.seed, "workload"),
        tau: a.tau,
    };
    let w = generate_workload(&ds, &queries, &spec)?;
    write_workload(&w, &a.out, WorkloadFormat::from_path(&a.out))?;
    println!("{} records -> {}", w.records.len(), a.out.display());
    Ok(())
}

struct Loaded {
    config: RunConfig,
    workload: fvs_lab::workload::Workload,
    hnsw: Option<IndexStore>,
    scann: Option<IndexStore>,
}

fn load_run(a: &RunCmd) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| config_error(format!("{}: {e}", a.config.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(w) = a.workers {
        config.workers = w;
    }
    if let Some(r) = a.repetitions {
        config.repetitions = r;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    let workload = read_workload(&a.workload)?;
    let open = |p: &Option<PathBuf>| -> Result<Option<IndexStore>, Failure> {
        match p {
            Some(p) => {
                let s = IndexStore::load(p)?;
                if s.catalog.dataset_hash != workload.header.dataset_hash {
                    return Err(Failure {
                        code: 3,
                        message: format!("{} was built over a different dataset than the workload", p.display()),
                    });
                }
                Ok(Some(s))
            }
            None => Ok(None),
        }
    };
    let hnsw = open(&a.hnsw)?;
    let scann = open(&a.scann)?;
    Ok(Loaded {
        config,
        workload,
        hnsw,
        scann,
    })
}

fn run_or_tune(a: RunCmd, measure_rows: bool) -> Result<(), Failure> {
    let l = load_run(&a)?;
    banner(if measure_rows { "run" } else { "tune" }, &a);
    for line in l.config.to_toml().lines() {
        println!("#   config: {line}");
    }
    let runners = harness::runners(&l.config, l.hnsw.as_ref(), l.scann.as_ref())?;
    let dyns: Vec<&dyn harness::Searcher> = runners.iter().map(|r| r as &dyn harness::Searcher).collect();
    let exp: Experiment = harness::run_with(&l.config, &l.workload, &dyns, measure_rows)?;
    if measure_rows {
        harness::write_csv(&a.out, &exp.rows)?;
        println!("{} rows -> {}", exp.rows.len(), a.out.display());
    } else {
        println!("{:>14} {:>4} {:>11} {:>16} {:>8} {:>8} note", "strategy", "k", "selectivity", "correlation", "effort", "recall");
        for t in &exp.tuned {
            println!(
                "{:>14} {:>4} {:>11} {:>16} {:>8} {:>8.3} {}",
                t.strategy,
                t.k,
                t.selectivity,
                t.correlation,
                t.point.effort,
                t.point.recall,
                if t.point.below_target { "below target" } else { "" }
            );
        }
    }
    if exp.any_below_target() {
        let n = exp.tuned.iter().filter(|t| t.point.below_target).count();
        return Err(Failure {
            code: 4,
            message: format!("{n} operating points stayed below the target recall"),
        });
    }
    Ok(())
}

fn report(a: Report) -> Result<(), Failure> {
    banner("report", &a);
    let rows = harness::read_csv(&a.csv)?;
    let weights = CostWeights::for_dim(a.dim);
    print!("{}", harness::render_report(&rows, &weights));
    if let Some(dir) = &a.svg_dir {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        let sums = harness::summarize(&rows);
        let mut keys: Vec<(Correlation, usize)> = sums.iter().map(|s| (s.correlation, s.k)).collect();
        keys.sort();
        keys.dedup();
        for (c, k) in keys {
            let p = dir.join(format!("breakdown-{c}-k{k}.svg"));
            std::fs::write(&p, harness::breakdown_svg(&sums, &weights, c, k)).map_err(Error::from)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Ingest(a) => ingest(a),
        Command::Build(a) => build(a),
        Command::Workload(a) => workload(a),
        Command::Run(a) => run_or_tune(a, true),
        Command::Tune(a) => run_or_tune(a, false),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
