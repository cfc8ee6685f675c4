//! `pagegraph` command-line tool: ground truth, index build, search,
//! benchmark sweeps and roofline analysis.
//!
//! Exit status is 0 on success, 2 for usage or configuration errors and 1
//! for runtime failures.

mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use pagegraph::dataset::{brute_force_topk, read_vectors, GroundTruth, VectorDataset, VectorFormat};
use pagegraph::index::{build_index, BuildConfig, DiskIndex};
use pagegraph::layout::IndexPrefix;
use pagegraph::roofline::{classify, derive_workload, MachineModel, WorkloadModel};
use pagegraph::search::{bench, BenchReport, EntryPolicy, SearchMode, SearchParams, Searcher};
use pagegraph::store::{LatencyModel, StoreOptions, SyntheticLatency, DEFAULT_IN_FLIGHT_LIMIT, DEFAULT_IO_THREADS};
use thiserror::Error;

use output::{config_echo, Format, Table};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(pagegraph::Error),
}

impl From<pagegraph::Error> for CliError {
    fn from(e: pagegraph::Error) -> Self {
        match e {
            pagegraph::Error::InvalidArgument(_) | pagegraph::Error::DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Run(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "pagegraph", version, about = "Disk-resident graph index for approximate nearest neighbor search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact k-NN ground truth by linear scan.
    Gt(GtArgs),
    /// Build an index file from base vectors.
    Build(BuildArgs),
    /// Run queries at one candidate-list size and print the neighbors.
    Search(SearchArgs),
    /// Sweep candidate-list sizes and report recall, QPS, latency and I/Os.
    Bench(SearchArgs),
    /// Roofline classification of a search workload.
    Roofline(RooflineArgs),
}

#[derive(Args)]
struct GtArgs {
    /// Base vectors (.fvecs, or .bin/.fbin).
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Ids are written here as ivecs; distances go to the same path with
    /// extension `dists.fvecs`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    base: PathBuf,
    /// Index file to write.
    #[arg(long)]
    out: PathBuf,
    /// Maximum out-degree.
    #[arg(long, default_value_t = 64)]
    r: usize,
    #[arg(long, default_value_t = 200)]
    l_build: usize,
    #[arg(long, default_value_t = 1.2)]
    alpha: f32,
    /// Principal dimensions; defaults to 256, or d/2 rounded down to a multiple of 4.
    #[arg(long)]
    d_pca: Option<usize>,
    /// PQ sub-spaces; defaults to d_pca / 4.
    #[arg(long)]
    m: Option<usize>,
    /// Entry-point table size.
    #[arg(long, default_value_t = pagegraph::index::DEFAULT_ENTRIES)]
    entries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Ground-truth ids (ivecs). A sibling `.dists.fvecs` is used when present.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Candidate-list size.
    #[arg(long, default_value_t = 100)]
    l: usize,
    /// Comma-separated candidate-list sizes; overrides --l in bench.
    #[arg(long, value_delimiter = ',')]
    l_sweep: Option<Vec<usize>>,
    /// Default beam width once the hop schedule saturates.
    #[arg(long, default_value_t = 16)]
    bw: usize,
    /// Share of a hop's pages processed before the next hop is dispatched.
    #[arg(long, default_value_t = 0.5)]
    dispatch_ratio: f64,
    /// `early` (early dispatch) or `sync`.
    #[arg(long, default_value = "early")]
    mode: String,
    /// `clustered` (entry-point table) or `medoid`.
    #[arg(long, default_value = "clustered")]
    entry: String,
    /// Memory budget; 80% of it holds pages of high in-degree nodes.
    #[arg(long, default_value_t = 0)]
    cache_budget_bytes: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Seed of the synthetic latency model.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `passthrough` (real reads, wall clock) or `synthetic` (virtual clock).
    #[arg(long, default_value = "passthrough")]
    latency_model: String,
    #[arg(long, default_value_t = 185.0)]
    latency_median_us: f64,
    /// Target p99.9 / median of the synthetic service time.
    #[arg(long, default_value_t = 10.8)]
    latency_tail_ratio: f64,
    #[arg(long, default_value_t = 0.01)]
    latency_p_tail: f64,
    /// Virtual CPU time charged per processed page.
    #[arg(long, default_value_t = 4.0)]
    compute_per_page_us: f64,
    #[arg(long, default_value_t = DEFAULT_IO_THREADS)]
    io_threads: usize,
    #[arg(long, default_value_t = DEFAULT_IN_FLIGHT_LIMIT)]
    in_flight_limit: usize,
    /// Use buffered reads instead of O_DIRECT.
    #[arg(long)]
    no_direct_io: bool,
    /// Stdout format: table, csv or tsv.
    #[arg(long, default_value = "table")]
    format: Format,
    /// Also write the rows, delimited, to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bench only: per-query results (query, l, rank, id, distance).
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct RooflineArgs {
    #[arg(long, default_value_t = 2.1)]
    cpu_ghz: f64,
    #[arg(long, default_value_t = 3.0)]
    cycles_per_flop: f64,
    #[arg(long, default_value_t = 48)]
    threads: u32,
    /// Peak SSD read bandwidth in GB/s.
    #[arg(long, default_value_t = 11.1)]
    ssd_gbps: f64,
    /// Take r, sub-vectors and page size from this index file.
    #[arg(long, conflicts_with_all = ["r", "sub_vectors", "page_bytes", "flops_per_page"])]
    index: Option<PathBuf>,
    #[arg(long)]
    r: Option<u64>,
    #[arg(long)]
    sub_vectors: Option<u64>,
    #[arg(long, default_value_t = 1)]
    nodes_per_page: u64,
    #[arg(long)]
    page_bytes: Option<u64>,
    /// Explicit FLOPs per page instead of r x sub-vectors x nodes.
    #[arg(long, conflicts_with_all = ["r", "sub_vectors"])]
    flops_per_page: Option<u64>,
    /// `table` or `kv`.
    #[arg(long, default_value = "table")]
    format: String,
    /// Write the key-value report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gt(a) => cmd_gt(a),
        Command::Build(a) => cmd_build(a),
        Command::Search(a) => cmd_search(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Roofline(a) => cmd_roofline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Run(_) => ExitCode::from(1),
            }
        }
    }
}

fn read_dataset(path: &Path) -> CliResult<VectorDataset> {
    Ok(read_vectors(path, VectorFormat::from_path(path))?)
}

fn dists_path(ids: &Path) -> PathBuf {
    ids.with_extension("dists.fvecs")
}

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    if threads == 0 {
        return Err(CliError::Usage("threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn cmd_gt(a: GtArgs) -> CliResult<()> {
    if a.k == 0 {
        return Err(CliError::Usage("k must be >= 1".into()));
    }
    let pool = pool(a.threads)?;
    let base = read_dataset(&a.base)?;
    let queries = read_dataset(&a.queries)?;
    if a.k > base.count() {
        return Err(CliError::Usage(format!("k = {} exceeds the {} base vectors", a.k, base.count())));
    }
    print!(
        "{}",
        config_echo(&[
            ("command", "gt".into()),
            ("base", format!("{} ({} x {})", a.base.display(), base.count(), base.dim())),
            ("queries", format!("{} ({})", a.queries.display(), queries.count())),
            ("k", a.k.to_string()),
            ("threads", a.threads.to_string()),
        ])
    );
    let gt = pool.install(|| brute_force_topk(&base, &queries, a.k))?;
    let dists = dists_path(&a.out);
    gt.write(&a.out, &dists)?;
    println!("wrote {} rows to {} and {}", gt.query_count, a.out.display(), dists.display());
    Ok(())
}

fn cmd_build(a: BuildArgs) -> CliResult<()> {
    let cfg = BuildConfig {
        r: a.r,
        l_build: a.l_build,
        alpha: a.alpha,
        d_pca: a.d_pca,
        m: a.m,
        entries: a.entries,
        seed: a.seed,
        threads: a.threads,
        ..Default::default()
    };
    cfg.vamana().validate()?;
    let base = read_dataset(&a.base)?;
    let resolved = cfg.resolve(base.count(), base.dim())?;
    print!(
        "{}",
        config_echo(&[
            ("command", "build".into()),
            ("base", a.base.display().to_string()),
            ("out", a.out.display().to_string()),
            ("count", resolved.count.to_string()),
            ("dim", resolved.dim.to_string()),
            ("d_pca", resolved.d_pca.to_string()),
            ("m", resolved.m.to_string()),
            ("r", cfg.r.to_string()),
            ("l_build", cfg.l_build.to_string()),
            ("alpha", cfg.alpha.to_string()),
            ("entries", resolved.entries.to_string()),
            ("seed", cfg.seed.to_string()),
            ("threads", cfg.threads.to_string()),
        ])
    );
    let report = build_index(&base, &cfg, &a.out)?;
    let mut t = Table::new(&["stage", "seconds"]);
    for (stage, d) in &report.stages {
        t.push(vec![stage.to_string(), format!("{:.3}", d.as_secs_f64())]);
    }
    t.push(vec!["total".into(), format!("{:.3}", report.total().as_secs_f64())]);
    print!("{}", t.render(Format::Table));

    // Re-read what was written as a validation pass.
    let prefix = IndexPrefix::read(&a.out)?;
    let bytes = std::fs::metadata(&a.out)?.len();
    println!(
        "index: {} nodes, page_size {} bytes, {} bytes on disk, medoid {}, {} entry points, {} nodes reconnected",
        prefix.header.count, prefix.header.page_size, bytes, prefix.header.medoid, prefix.header.entries, report.repaired_nodes
    );
    Ok(())
}

struct SearchSetup {
    params: SearchParams,
    options: StoreOptions,
}

fn search_setup(a: &SearchArgs) -> CliResult<SearchSetup> {
    let mode: SearchMode = a.mode.parse()?;
    let entry = match a.entry.as_str() {
        "clustered" => EntryPolicy::Clustered,
        "medoid" => EntryPolicy::Medoid,
        other => return Err(CliError::Usage(format!("unknown entry policy '{other}'"))),
    };
    let params = SearchParams {
        k: a.k,
        l: a.l,
        bw_default: a.bw,
        dispatch_ratio: a.dispatch_ratio,
        mode,
        entry,
    };
    params.validate()?;
    for &l in a.l_sweep.iter().flatten() {
        SearchParams { l, ..params }.validate()?;
    }
    let latency = match a.latency_model.as_str() {
        "passthrough" => LatencyModel::Passthrough,
        "synthetic" => {
            let ok = |x: f64| x.is_finite() && x >= 0.0;
            if !ok(a.latency_median_us) || !ok(a.compute_per_page_us) {
                return Err(CliError::Usage("latency times must be finite and non-negative".into()));
            }
            let s = SyntheticLatency {
                median: Duration::from_secs_f64(a.latency_median_us * 1e-6),
                tail_ratio: a.latency_tail_ratio,
                p_tail: a.latency_p_tail,
                compute_per_page: Duration::from_secs_f64(a.compute_per_page_us * 1e-6),
                seed: a.seed,
                ..Default::default()
            };
            s.calibrate()?;
            LatencyModel::Synthetic(s)
        }
        other => return Err(CliError::Usage(format!("unknown latency model '{other}'"))),
    };
    if a.threads == 0 || a.io_threads == 0 || a.in_flight_limit == 0 {
        return Err(CliError::Usage("threads, io threads and in-flight limit must be >= 1".into()));
    }
    let options = StoreOptions {
        latency,
        in_flight_limit: a.in_flight_limit,
        io_threads: a.io_threads,
        direct_io: !a.no_direct_io,
    };
    Ok(SearchSetup { params, options })
}

fn search_echo(command: &str, a: &SearchArgs, s: &SearchSetup, index: &DiskIndex, queries: &VectorDataset, ls: &[usize]) -> String {
    let h = index.header();
    let latency = match s.options.latency {
        LatencyModel::Passthrough => "passthrough".to_string(),
        LatencyModel::Synthetic(m) => format!(
            "synthetic (median {:?}, p99.9/median {}, p_tail {}, sigma {}, compute/page {:?}, seed {})",
            m.median, m.tail_ratio, m.p_tail, m.sigma, m.compute_per_page, m.seed
        ),
    };
    config_echo(&[
        ("command", command.into()),
        ("index", format!("{} ({} x {}, d_pca {}, r {}, page {} B)", a.index.display(), h.count, h.dim, h.d_pca, h.r, h.page_size)),
        ("queries", format!("{} ({})", a.queries.display(), queries.count())),
        ("gt", a.gt.as_ref().map_or("none".into(), |p| p.display().to_string())),
        ("k", s.params.k.to_string()),
        ("l", ls.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")),
        ("bw", s.params.bw_default.to_string()),
        ("mode", s.params.mode.to_string()),
        ("dispatch_ratio", s.params.dispatch_ratio.to_string()),
        ("entry", a.entry.clone()),
        ("cache_budget_bytes", a.cache_budget_bytes.to_string()),
        ("cached_pages", index.cache().len().to_string()),
        ("threads", a.threads.to_string()),
        ("latency_model", latency),
        ("in_flight_limit", s.options.in_flight_limit.to_string()),
        ("direct_io", index.store().direct_io().to_string()),
    ])
}

fn open_for_search(a: &SearchArgs, s: &SearchSetup) -> CliResult<(DiskIndex, VectorDataset, Option<GroundTruth>)> {
    let mut index = DiskIndex::open(&a.index, s.options)?;
    let queries = read_dataset(&a.queries)?;
    if queries.dim() != index.header().dim {
        return Err(CliError::Usage(format!(
            "queries have dimension {}, index {}",
            queries.dim(),
            index.header().dim
        )));
    }
    let gt = match &a.gt {
        Some(p) => {
            let d = dists_path(p);
            let gt = GroundTruth::read(p, d.exists().then_some(d.as_path()))?;
            if gt.query_count != queries.count() {
                return Err(CliError::Usage(format!(
                    "ground truth has {} rows for {} queries",
                    gt.query_count,
                    queries.count()
                )));
            }
            if gt.k < s.params.k {
                return Err(CliError::Usage(format!("ground truth has k = {}, need {}", gt.k, s.params.k)));
            }
            Some(gt)
        }
        None => None,
    };
    index.populate_cache_from_pages(a.cache_budget_bytes)?;
    Ok((index, queries, gt))
}

fn write_rows(path: &Path, text: &str) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn us(d: Duration) -> String {
    format!("{:.1}", d.as_secs_f64() * 1e6)
}

fn cmd_search(a: SearchArgs) -> CliResult<()> {
    let setup = search_setup(&a)?;
    let (index, queries, gt) = open_for_search(&a, &setup)?;
    print!("{}", search_echo("search", &a, &setup, &index, &queries, &[setup.params.l]));
    let mut t = Table::new(&["query", "rank", "id", "distance"]);
    let mut searcher = Searcher::new(&index);
    for (qi, q) in queries.rows().enumerate() {
        let res = searcher.search(q, &setup.params, qi as u64)?;
        for (rank, (id, d)) in res.ids.iter().zip(&res.dists).enumerate() {
            t.push(vec![qi.to_string(), (rank + 1).to_string(), id.to_string(), d.to_string()]);
        }
    }
    print!("{}", t.render(a.format));
    if let Some(out) = &a.out {
        write_rows(out, &t.delimited(a.format.file_delimiter()))?;
    }
    // A recall line when ground truth is available.
    if let Some(gt) = &gt {
        let r = bench(&index, &queries, Some(gt), &setup.params, 1)?;
        println!("# recall@{}: {:.4}", setup.params.k, r.recall.unwrap_or(0.0));
    }
    Ok(())
}

fn bench_row(r: &BenchReport) -> Vec<String> {
    vec![
        r.l.to_string(),
        r.recall.map_or("-".into(), |x| format!("{x:.4}")),
        format!("{:.1}", r.qps),
        us(r.mean_latency),
        us(r.median_latency),
        us(r.p99_latency),
        format!("{:.2}", r.mean_ios),
        format!("{:.2}", r.mean_hops),
        format!("{:.4}", r.cache_hit_ratio),
        format!("{:.2}", r.mean_deferred()),
    ]
}

fn cmd_bench(a: SearchArgs) -> CliResult<()> {
    let setup = search_setup(&a)?;
    let ls = a.l_sweep.clone().unwrap_or_else(|| vec![setup.params.l]);
    if ls.is_empty() {
        return Err(CliError::Usage("empty --l-sweep".into()));
    }
    let (index, queries, gt) = open_for_search(&a, &setup)?;
    print!("{}", search_echo("bench", &a, &setup, &index, &queries, &ls));
    let recall_col = format!("recall@{}", setup.params.k);
    let mut t = Table::new(&[
        "l",
        &recall_col,
        "qps",
        "mean_us",
        "median_us",
        "p99_us",
        "mean_ios",
        "mean_hops",
        "cache_hit_ratio",
        "mean_deferred",
    ]);
    let mut dump = Table::new(&["query", "l", "rank", "id", "distance"]);
    for &l in &ls {
        let params = SearchParams { l, ..setup.params };
        index.cache().reset_stats();
        let r = bench(&index, &queries, gt.as_ref(), &params, a.threads)?;
        t.push(bench_row(&r));
        if a.dump.is_some() {
            for (qi, res) in r.results.iter().enumerate() {
                for (rank, (id, d)) in res.ids.iter().zip(&res.dists).enumerate() {
                    dump.push(vec![qi.to_string(), l.to_string(), (rank + 1).to_string(), id.to_string(), d.to_string()]);
                }
            }
        }
    }
    print!("{}", t.render(a.format));
    if let Some(out) = &a.out {
        write_rows(out, &t.delimited(a.format.file_delimiter()))?;
    }
    if let Some(path) = &a.dump {
        write_rows(path, &dump.delimited(a.format.file_delimiter()))?;
    }
    Ok(())
}

fn cmd_roofline(a: RooflineArgs) -> CliResult<()> {
    if a.format != "table" && a.format != "kv" {
        return Err(CliError::Usage(format!("unknown roofline format '{}' (expected table or kv)", a.format)));
    }
    let machine = MachineModel {
        cpu_ghz: a.cpu_ghz,
        cycles_per_flop: a.cycles_per_flop,
        threads: a.threads,
        ssd_gbps: a.ssd_gbps,
    };
    machine.validate()?;
    let (workload, source) = match (&a.index, a.flops_per_page) {
        (Some(path), _) => {
            let p = IndexPrefix::read(path)?;
            let w = derive_workload(p.header.r as u64, p.codebook.m() as u64, a.nodes_per_page, p.header.page_size as u64)?;
            (w, format!("index {} (r {}, sub-vectors {}, page {} B)", path.display(), p.header.r, p.codebook.m(), p.header.page_size))
        }
        (None, Some(flops)) => {
            let page_bytes = a.page_bytes.ok_or_else(|| CliError::Usage("--page-bytes is required".into()))?;
            (WorkloadModel { flops_per_page: flops, page_bytes }, "flags".into())
        }
        (None, None) => {
            let need = |v: Option<u64>, name: &str| v.ok_or_else(|| CliError::Usage(format!("--{name} is required without --index")));
            let w = derive_workload(need(a.r, "r")?, need(a.sub_vectors, "sub-vectors")?, a.nodes_per_page, need(a.page_bytes, "page-bytes")?)?;
            (w, "flags".into())
        }
    };
    let report = classify(&machine, &workload)?;
    print!(
        "{}",
        config_echo(&[
            ("command", "roofline".into()),
            ("cpu_ghz", machine.cpu_ghz.to_string()),
            ("cycles_per_flop", machine.cycles_per_flop.to_string()),
            ("threads", machine.threads.to_string()),
            ("ssd_gbps", machine.ssd_gbps.to_string()),
            ("workload", source),
            ("flops_per_page", workload.flops_per_page.to_string()),
            ("page_bytes", workload.page_bytes.to_string()),
        ])
    );
    if a.format == "kv" {
        print!("{}", report.to_key_values());
    } else {
        println!("{report}");
    }
    if let Some(out) = &a.out {
        write_rows(out, &report.to_key_values())?;
    }
    Ok(())
}
