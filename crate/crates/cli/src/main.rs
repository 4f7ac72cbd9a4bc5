use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use peer_core::bench::{run_sweep, write_results_csv, write_tidy_csv, BenchOptions, SweepSpec};
use peer_core::io::{self, ModelDocument, TruthDocument};
use peer_core::{fit_peer, generate, predict, PeerConfig, PeerError, SimScenario};

#[derive(Parser)]
#[command(
    name = "peer",
    version,
    about = "Sparse reduced-rank regression with incomplete responses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one synthetic dataset and write X.csv, Y.csv, C_star.csv and truth.json.
    Simulate(SimulateArgs),
    /// Fit a model to X.csv / Y.csv and write model.json and fitted.csv.
    Fit(FitArgs),
    /// Run a replicated simulation sweep and write results.csv.
    Benchmark(BenchArgs),
}

#[derive(Clone, Copy, Debug)]
enum Threads {
    Auto,
    Count(usize),
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("thread count must be at least 1".into()),
            Ok(n) => Ok(Threads::Count(n)),
            Err(_) => Err(format!("expected a positive integer or `auto`, got {s:?}")),
        }
    }
}

impl Threads {
    fn count(self) -> usize {
        match self {
            Threads::Count(n) => n,
            Threads::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// SVT relative-change tolerance.
    #[arg(long = "svt-tol", default_value_t = 1e-4)]
    svt_tol: f64,
    #[arg(long = "svt-max-iter", default_value_t = 500)]
    svt_max_iter: usize,
    /// Number of lambda values per layer.
    #[arg(long = "lasso-grid", default_value_t = 100)]
    lasso_grid: usize,
    /// Smallest lambda as a fraction of lambda_max.
    #[arg(long = "lasso-ratio", default_value_t = 1e-3)]
    lasso_ratio: f64,
    /// Worker threads, or `auto`.
    #[arg(long, env = "PEER_THREADS", default_value = "1")]
    threads: Threads,
}

impl SolverArgs {
    fn config(&self, rank: usize) -> PeerConfig {
        let mut cfg = PeerConfig::new(rank);
        cfg.svt_tolerance = self.svt_tol;
        cfg.svt_max_iterations = self.svt_max_iter;
        cfg.lasso.grid_size = self.lasso_grid;
        cfg.lasso.grid_ratio = self.lasso_ratio;
        cfg
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario replicate id.
    #[arg(long)]
    replicate: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Initial rank, an upper bound on the estimated rank.
    #[arg(long)]
    rank: usize,
    /// Fit without centering or an intercept.
    #[arg(long)]
    no_center: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep JSON, or a single scenario JSON.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Initial rank; defaults to r* + 1.
    #[arg(long)]
    rank: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also write per-replicate scores to tidy.csv.
    #[arg(long)]
    tidy: bool,
    /// Write NA in the time columns so the output depends only on the inputs.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

fn read_sweep(path: &Path) -> peer_core::Result<SweepSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        PeerError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    if let Ok(spec) = serde_json::from_str::<SweepSpec>(&text) {
        return Ok(spec);
    }
    let scenario: SimScenario = serde_json::from_str(&text)?;
    Ok(SweepSpec::single(scenario, 1))
}

fn out_dir(dir: &Path) -> peer_core::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        PeerError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.display()),
        ))
    })
}

fn simulate(args: &SimulateArgs) -> peer_core::Result<()> {
    let mut scn: SimScenario = io::read_json(&args.scenario)?;
    if let Some(seed) = args.seed {
        scn.seed = seed;
    }
    if let Some(r) = args.replicate {
        scn.replicate_id = r;
    }
    let data = generate::<f64>(&scn)?;
    out_dir(&args.out)?;
    io::write_matrix_csv(io::create(&args.out.join("X.csv"))?, &data.x)?;
    io::write_observed_csv(io::create(&args.out.join("Y.csv"))?, &data.obs)?;
    io::write_matrix_csv(
        io::create(&args.out.join("C_star.csv"))?,
        &data.truth.c_star,
    )?;
    io::write_json(
        &args.out.join("truth.json"),
        &TruthDocument::new(&scn, &data.truth, data.sigma),
    )?;
    log::info!(
        "wrote dataset with {} observed responses to {}",
        data.obs.observed_count(),
        args.out.display()
    );
    Ok(())
}

fn fit(args: &FitArgs) -> peer_core::Result<()> {
    let x = io::read_design_csv(&args.x)?;
    let y = io::read_response_csv(&args.y)?;
    let mut cfg = args.solver.config(args.rank);
    cfg.center = !args.no_center;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.solver.threads.count())
        .build()
        .map_err(|e| PeerError::InvalidInput(format!("cannot build thread pool: {e}")))?;
    let model = pool.install(|| fit_peer(&y, &x, &cfg))?;
    let fitted = predict(&model, &x)?;
    out_dir(&args.out)?;
    io::write_json(
        &args.out.join("model.json"),
        &ModelDocument::from_model(&model, x.nrows()),
    )?;
    io::write_matrix_csv(io::create(&args.out.join("fitted.csv"))?, &fitted)?;
    log::info!("estimated rank {} of {}", model.estimated_rank, cfg.rank);
    Ok(())
}

fn benchmark(args: &BenchArgs) -> peer_core::Result<()> {
    let mut spec = read_sweep(&args.scenario)?;
    if let Some(seed) = args.seed {
        spec.scenario.seed = seed;
    }
    if let Some(r) = args.replicates {
        spec.replicates = r;
    }
    if args.rank.is_some() {
        spec.initial_rank = args.rank;
    }
    let mut opts = BenchOptions {
        threads: args.solver.threads.count(),
        ..BenchOptions::default()
    };
    opts.fit = PeerConfig {
        parallel_layers: false,
        ..args.solver.config(1)
    };
    let report = run_sweep(&spec, &opts)?;
    out_dir(&args.out)?;
    let record_time = !args.no_timing;
    write_results_csv(
        io::create(&args.out.join("results.csv"))?,
        &report,
        record_time,
    )?;
    if args.tidy {
        write_tidy_csv(
            io::create(&args.out.join("tidy.csv"))?,
            &report,
            record_time,
        )?;
    }
    let failures: usize = report.cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        log::warn!("{failures} replicate(s) failed; see the failures column");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
