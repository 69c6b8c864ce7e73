//! `mtridge` command line. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data or numerical error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use faer::{Mat, MatRef};

use crate::bench::{
    generate_synthetic, permutation_null, run_benchmark_on, write_sweep_csv, BenchConfig, BenchReport, Baselines,
    DataOrigin,
};
use crate::cost::{cost_report, ProblemShape};
use crate::dataio::config::{DataSource, RunConfig, SynthSource};
use crate::dataio::{read_csv_matrix, read_matrix, write_csv_matrix, write_matrix};
use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, TargetMatrix, WeightMatrix};
use crate::ridge::predict;
use crate::schedulers::{fit, serve_worker, Backend, FitOptions, Strategy, WorkerPool};
use crate::selection::{HyperParamGrid, Metric, SplitKind};

#[derive(Parser, Debug)]
#[command(name = "mtridge", version, about = "Cross-validated multi-target ridge regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic workload and write X, Y and the true weights.
    Synth(SynthArgs),
    /// Fit weights and write them with a JSON summary.
    Fit(FitArgs),
    /// Apply stored weights to a feature matrix.
    Predict(PredictArgs),
    /// Time one or more configurations.
    Bench(BenchArgs),
    /// Print the analytic operation counts as JSON.
    Cost(CostArgs),
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        id: u64,
    },
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature matrix (.rmx or .csv).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Target matrix (.rmx or .csv).
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct CvArgs {
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Comma-separated λ candidates.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, conflicts_with_all = ["loo", "holdout"])]
    folds: Option<usize>,
    #[arg(long)]
    loo: bool,
    /// Single split holding out this fraction of rows.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    threads_per_worker: Option<usize>,
    #[arg(long)]
    backend: Option<Backend>,
    /// Pick one λ over all targets for mor and bmor.
    #[arg(long)]
    global_lambda: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for X.rmx, Y.rmx and B_true.rmx.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cv: CvArgs,
    #[arg(long)]
    c: Option<usize>,
    /// Output directory for weights.rmx and fit.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cv: CvArgs,
    /// Comma-separated worker counts, one run each.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long)]
    no_warmup: bool,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    /// Also fit with row-shuffled features and report both.
    #[arg(long)]
    null: bool,
    /// Sweep CSV, one row per run.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON array of reports; printed to stdout when absent.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    p: u64,
    #[arg(long)]
    t: u64,
    #[arg(long, default_value_t = 11)]
    r: u64,
    #[arg(long, default_value_t = 1)]
    c: u64,
    /// Calibrated seconds per operation; adds predicted times.
    #[arg(long)]
    seconds_per_op: Option<f64>,
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn load(path: &Path) -> Result<Mat<f64>> {
    if is_csv(path) {
        read_csv_matrix(path)
    } else {
        read_matrix(path)
    }
}

fn save(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    if is_csv(path) {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_csv_matrix(&mut w, m).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    } else {
        write_matrix(path, m)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes to stdout; a closed pipe is not an error.
fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Builds the run configuration: file first, then flags on top.
fn run_config(data: &DataArgs, cv: &CvArgs) -> Result<RunConfig> {
    let mut cfg = match &data.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if data.x.is_some() || data.y.is_some() {
        cfg.features = data.x.clone();
        cfg.targets = data.y.clone();
        cfg.synth = None;
    }
    let flags = SynthSource {
        preset: data.preset.clone(),
        n: data.n,
        p: data.p,
        t: data.t,
        snr: data.snr,
        sparsity: data.sparsity,
    };
    if !flags.is_empty() {
        if data.x.is_none() && data.y.is_none() {
            cfg.features = None;
            cfg.targets = None;
        }
        let mut merged = cfg.synth.take().unwrap_or_default();
        if flags.preset.is_some() {
            merged = SynthSource { preset: flags.preset, ..Default::default() };
        }
        merged.n = flags.n.or(merged.n);
        merged.p = flags.p.or(merged.p);
        merged.t = flags.t.or(merged.t);
        merged.snr = flags.snr.or(merged.snr);
        merged.sparsity = flags.sparsity.or(merged.sparsity);
        cfg.synth = Some(merged);
    }
    if let Some(seed) = data.seed {
        cfg.seed = seed;
    }
    if let Some(s) = cv.strategy {
        cfg.strategy = s;
    }
    if let Some(g) = &cv.grid {
        cfg.grid = HyperParamGrid::new(g.clone())?;
    }
    if let Some(folds) = cv.folds {
        cfg.split = SplitKind::KFold { folds };
    }
    if cv.loo {
        cfg.split = SplitKind::LeaveOneOut;
    }
    if let Some(fraction) = cv.holdout {
        cfg.split = SplitKind::Holdout { fraction };
    }
    if let Some(m) = cv.metric {
        cfg.metric = m;
    }
    if let Some(tpw) = cv.threads_per_worker {
        cfg.threads_per_worker = tpw;
    }
    if let Some(b) = cv.backend {
        cfg.backend = b;
    }
    cfg.global_lambda |= cv.global_lambda;
    Ok(cfg)
}

struct Loaded {
    x: FeatureMatrix,
    y: TargetMatrix,
    origin: DataOrigin,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    match cfg.source()? {
        DataSource::Files { features, targets } => Ok(Loaded {
            x: FeatureMatrix::new(load(&features)?)?,
            y: TargetMatrix::new(load(&targets)?)?,
            origin: DataOrigin::default(),
        }),
        DataSource::Synth(spec) => {
            let d = generate_synthetic(&spec)?;
            Ok(Loaded { x: d.x, y: d.y, origin: (&spec).into() })
        }
    }
}

fn worker_exe() -> Result<PathBuf> {
    std::env::current_exe().map_err(|e| Error::Config(format!("cannot locate own executable: {e}")))
}

fn pool_for(cfg: &RunConfig, c: usize) -> Result<WorkerPool> {
    match cfg.backend {
        Backend::Threads => WorkerPool::new(c, cfg.threads_per_worker),
        Backend::Processes => WorkerPool::processes(c, cfg.threads_per_worker, worker_exe()?),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = run_config(&args.data, &CvArgs::default())?;
    let DataSource::Synth(spec) = cfg.source()? else {
        return Err(Error::Config("synth needs a preset or --n/--p/--t, not input files".into()));
    };
    let d = generate_synthetic(&spec)?;
    create_dir(&args.out)?;
    save(&args.out.join("X.rmx"), d.x.as_mat())?;
    save(&args.out.join("Y.rmx"), d.y.as_mat())?;
    save(&args.out.join("B_true.rmx"), d.weights.as_mat())?;
    write_text(&args.out.join("synth.json"), &serde_json::to_string_pretty(&spec)?)?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut cfg = run_config(&args.data, &args.cv)?;
    if let Some(c) = args.c {
        cfg.c = c;
    }
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    cfg.validate()?;
    let out = cfg.output.clone().ok_or_else(|| Error::Config("fit needs --out or `output` in the config".into()))?;
    let data = load_data(&cfg)?;
    let pool = pool_for(&cfg, cfg.c)?;
    let res = fit(
        cfg.strategy,
        &data.x,
        &data.y,
        &cfg.settings(),
        &pool,
        FitOptions { global_lambda: cfg.global_lambda },
    )?;
    create_dir(&out)?;
    save(&out.join("weights.rmx"), res.weights.as_mat())?;
    write_text(&out.join("fit.json"), &serde_json::to_string_pretty(&res.summary())?)?;
    log::info!("{} fit in {:.3}s", res.strategy, res.wall_time_s);
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let x = FeatureMatrix::new(load(&args.x)?)?;
    let w = WeightMatrix::new(load(&args.weights)?)?;
    save(&args.out, predict(&x, &w)?.as_mat())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = run_config(&args.data, &args.cv)?;
    cfg.validate()?;
    let data = load_data(&cfg)?;
    let counts = args.c.clone().unwrap_or_else(|| vec![cfg.c]);
    let bench_cfg = |c: usize| BenchConfig {
        strategy: cfg.strategy,
        settings: cfg.settings(),
        c,
        threads_per_worker: cfg.threads_per_worker,
        backend: cfg.backend,
        worker_exe: None,
        global_lambda: cfg.global_lambda,
        repetitions: args.reps,
        warmup: !args.no_warmup,
        test_fraction: args.test_fraction,
        seed: cfg.seed,
        time_budget: None,
    };
    let exe = match cfg.backend {
        Backend::Processes => Some(worker_exe()?),
        Backend::Threads => None,
    };

    let mut baselines = Baselines::new();
    let mut reports: Vec<BenchReport> = Vec::new();
    for &c in &counts {
        let bc = BenchConfig { worker_exe: exe.clone(), ..bench_cfg(c) };
        if args.null {
            let (aligned, shuffled) = permutation_null(&data.x, &data.y, &bc, data.origin, None)?;
            reports.push(aligned.report);
            reports.push(shuffled.report);
        } else {
            reports.push(run_benchmark_on(&data.x, &data.y, &bc, data.origin)?.report);
        }
        baselines.record(reports.last().expect("just pushed"));
        if args.null {
            baselines.record(&reports[reports.len() - 2]);
        }
    }
    for r in &mut reports {
        baselines.apply(r);
        for w in &r.warnings {
            log::warn!("{w}");
        }
    }

    if let Some(path) = &args.csv {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_sweep_csv(BufWriter::new(file), &reports)?;
    }
    let json = serde_json::to_string_pretty(&reports)?;
    match &args.json {
        Some(path) => write_text(path, &json)?,
        None => print_stdout(&json)?,
    }
    Ok(())
}

fn cmd_cost(args: CostArgs) -> Result<()> {
    let shape = ProblemShape::new(args.n, args.p, args.t, args.r, args.c)?;
    print_stdout(&serde_json::to_string_pretty(&cost_report(&shape, args.seconds_per_op)?)?)
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Worker { connect, id } => serve_worker(&connect, id),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}
