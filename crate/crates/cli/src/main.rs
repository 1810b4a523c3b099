//! `hmst`: simulation, fitting, pair selection, dataset import/export and
//! the experiment service behind one binary.
//!
//! Data goes to stdout, diagnostics to stderr; the exit status is nonzero
//! iff the command failed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hybrid_mst::dataset::{read_dataset_file, Dataset};
use hybrid_mst::simulator::{
    format_summary_table, run_monte_carlo, write_summary_json, write_trajectories_csv, SimulationConfig, Strategy,
};
use hybrid_mst::{fit_bt, gh_nodes_weights, next_batch, utility_graph, FitOptions, SamplerState};
use hybrid_mst_service::{CreateExperiment, Engine, ServiceConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "hmst",
    version,
    about = "Active pair selection for pairwise preference aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo comparison of sampling strategies on synthetic items.
    Simulate(SimulateArgs),
    /// Bradley-Terry scores, standard errors and ranking for a count CSV.
    Fit(FitArgs),
    /// The next pair batch the hybrid sampler would request for a count CSV.
    Next(NextArgs),
    /// Create a service experiment from a count CSV; prints its id.
    Import(ImportArgs),
    /// Print an experiment's observed counts as CSV.
    Export(ExportArgs),
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON simulation config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of items [default: 20].
    #[arg(long)]
    n: Option<usize>,
    /// Repetitions [default: 100].
    #[arg(long)]
    reps: Option<usize>,
    /// Votes per run in standard trial numbers [default: 15].
    #[arg(long)]
    budget: Option<f64>,
    /// Base seed; repetition r uses seed + r [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated strategies: hybrid-mst, gm-only, mst-only, random, fpc
    /// [default: hybrid-mst,random].
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Vote inversion probability [default: 0.1].
    #[arg(long)]
    error_rate: Option<f64>,
    /// Comma-separated evaluation points in standard trial numbers
    /// [default: 0.25,0.5,1,2,3,5,10,15].
    #[arg(long, value_delimiter = ',')]
    eval_points: Option<Vec<f64>>,
    /// Gauss-Hermite order for the information gain [default: 30].
    #[arg(long)]
    quadrature_order: Option<usize>,
    /// Per-run trajectories CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Print correlations as arctanh and RMSE as -1/RMSE.
    #[arg(long)]
    rescaled: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// CSV with header item_a,item_b,count_a_wins.
    matrix: PathBuf,
    /// Pseudo-count added to every ordered pair.
    #[arg(long, default_value_t = 1)]
    prior: u64,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct NextArgs {
    /// CSV with header item_a,item_b,count_a_wins.
    matrix: PathBuf,
    /// Gauss-Hermite order.
    #[arg(long, default_value_t = hybrid_mst::quadrature::DEFAULT_ORDER)]
    quadrature_order: usize,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServiceArgs {
    /// JSON service config; HMST_* environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the data directory from config and environment.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl ServiceArgs {
    fn load(&self) -> Result<ServiceConfig> {
        let mut cfg = ServiceConfig::load(self.config.as_deref())?;
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// CSV with header item_a,item_b,count_a_wins.
    matrix: PathBuf,
    #[command(flatten)]
    service: ServiceArgs,
    /// Accept votes on pairs that were never assigned.
    #[arg(long)]
    free_voting: bool,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Experiment id.
    id: String,
    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    service: ServiceArgs,
    /// Overrides the listen address, e.g. 127.0.0.1:0 for any free port.
    #[arg(long)]
    listen: Option<String>,
}

fn simulation_config(args: &SimulateArgs) -> Result<SimulationConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SimulationConfig::from_json(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => SimulationConfig::default(),
    };
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = args.budget {
        cfg.budget = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.strategies {
        cfg.strategies = v.clone();
    }
    if let Some(v) = args.error_rate {
        cfg.error_rate = v;
    }
    if let Some(v) = &args.eval_points {
        cfg.eval_points = v.clone();
    }
    if let Some(v) = args.quadrature_order {
        cfg.quadrature_order = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = simulation_config(&args)?;
    let started = Instant::now();
    let result = run_monte_carlo(&cfg)?;
    tracing::info!(
        elapsed_ms = started.elapsed().as_millis() as u64,
        reps = cfg.reps,
        "simulation finished"
    );
    if let Some(path) = &args.out {
        let mut w = create_file(path)?;
        write_trajectories_csv(&mut w, &result.runs)?;
        w.flush()?;
    }
    if let Some(path) = &args.summary {
        let mut w = create_file(path)?;
        write_summary_json(&mut w, &result.summary)?;
        w.flush()?;
    }
    print!("{}", format_summary_table(&result.summary, args.rescaled));
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset_file(path).with_context(|| path.display().to_string())
}

#[derive(Debug, Serialize)]
struct FitReport {
    items: Vec<String>,
    scores: Vec<f64>,
    std_errors: Vec<f64>,
    ranking: Vec<usize>,
    log_likelihood: f64,
    prior: u64,
}

fn fit(args: FitArgs) -> Result<()> {
    let data = load_dataset(&args.matrix)?;
    let mut matrix = data.matrix;
    matrix.set_prior(args.prior);
    let started = Instant::now();
    let est = fit_bt(&matrix, &FitOptions::default()).with_context(|| args.matrix.display().to_string())?;
    tracing::info!(
        elapsed_us = started.elapsed().as_micros() as u64,
        iterations = est.iterations(),
        "fit"
    );
    let report = FitReport {
        scores: est.scores().to_vec(),
        std_errors: est.standard_errors(),
        ranking: est.ranking(),
        log_likelihood: est.log_likelihood(),
        prior: args.prior,
        items: data.items,
    };
    let mut out = io::stdout().lock();
    if args.json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{:>4}  {:<24} {:>12} {:>12}", "rank", "item", "score", "std_error")?;
        for (rank, &i) in report.ranking.iter().enumerate() {
            writeln!(
                out,
                "{:>4}  {:<24} {:>12.6} {:>12.6}",
                rank + 1,
                report.items[i],
                report.scores[i],
                report.std_errors[i]
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BatchEntry {
    pair: [usize; 2],
    labels: [String; 2],
    utility: f64,
}

#[derive(Debug, Serialize)]
struct NextReport {
    mode: hybrid_mst::Mode,
    observed_votes: u64,
    pairs: Vec<BatchEntry>,
}

fn next(args: NextArgs) -> Result<()> {
    let data = load_dataset(&args.matrix)?;
    let mut matrix = data.matrix;
    matrix.set_prior(hybrid_mst::bt::DEFAULT_PRIOR_COUNT);
    let quad = gh_nodes_weights(args.quadrature_order)?;
    let started = Instant::now();
    let est = fit_bt(&matrix, &FitOptions::default()).with_context(|| args.matrix.display().to_string())?;
    let graph = utility_graph(&est, &quad);
    let state = SamplerState::new(matrix.n(), matrix.observed_total());
    let batch = next_batch(&graph, &state)?;
    tracing::info!(elapsed_us = started.elapsed().as_micros() as u64, "fit and selection");
    let report = NextReport {
        mode: state.mode(),
        observed_votes: matrix.observed_total(),
        pairs: batch
            .pairs()
            .iter()
            .map(|&(i, j)| BatchEntry {
                pair: [i, j],
                labels: [data.items[i].clone(), data.items[j].clone()],
                utility: graph.get(i, j),
            })
            .collect(),
    };
    let mut out = io::stdout().lock();
    if args.json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    } else {
        writeln!(out, "mode {} after {} votes", report.mode, report.observed_votes)?;
        for e in &report.pairs {
            writeln!(out, "{}\t{}\t{:.9e}", e.labels[0], e.labels[1], e.utility)?;
        }
    }
    Ok(())
}

fn import(args: ImportArgs) -> Result<()> {
    let data = load_dataset(&args.matrix)?;
    let engine = Engine::open(args.service.load()?)?;
    let view = engine.import(
        &data,
        CreateExperiment {
            items: Vec::new(),
            quadrature_order: None,
            staleness_secs: None,
            free_voting: Some(args.free_voting),
        },
    )?;
    println!("{}", view.id);
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let engine = Engine::open(args.service.load()?)?;
    print!("{}", engine.export_csv(&args.id)?);
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut cfg = args.service.load()?;
    if let Some(l) = args.listen {
        cfg.listen = l;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .with_context(|| format!("binding {}", cfg.listen))?;
        let engine = Arc::new(Engine::open(cfg)?);
        let addr = listener.local_addr()?;
        tracing::info!(%addr, "serving");
        // The bound address is the one line of data this command emits, so
        // callers that asked for port 0 can find the server.
        println!("listening on {addr}");
        io::stdout().flush()?;
        hybrid_mst_service::serve(engine, listener, hybrid_mst_service::shutdown_signal()).await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Next(a) => next(a),
        Command::Import(a) => import(a),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
