//! Command-line front end.
//!
//! Four subcommands cover the pipeline: `weights` computes balancing weights
//! for a CSV data set, `estimate` adds the weighted dose-response fit,
//! `tune` sweeps a (lambda, cap) grid and writes the ESS-vs-discrepancy
//! frontier, and `benchmark` runs the simulation study. Options resolve as
//! defaults < config file < command line; a config file is flat `key = value`
//! lines with `#` comments. Every output file is written atomically (temp
//! file in the same directory, then rename), so a failed run never leaves a
//! partial file behind. Exit codes: 0 success, 1 bad usage, 2 runtime
//! failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Axis;
use serde_json::json;

use crate::data::{load_csv, standardize, ColumnRole, Dataset, Schema, WeightSolution};
use crate::discrepancy::{mmd_form, npcbgps_moments};
use crate::error::Error;
use crate::kernel::{median_heuristic_bandwidth, KernelSpec};
use crate::regression::{estimate_effect, fit_weighted, treatment_grid, ModelClass};
use crate::solver::{
    solve_dual, solve_finite_class, solve_mmd, solve_w1_nearest, solve_w1_transport,
    weights_from_dual, LegendrePair, SolverConfig,
};
use crate::target::{build_marginal_product, build_shuffle, default_shuffle_rounds, TargetSample};
use crate::tuning::{balance_report, frontier_with_config, knee_point};
use crate::sim::{run_benchmark, BenchMethod, ResponseFamily, ScenarioConfig};

/// Runs the CLI on the given argument vector and returns the process exit
/// status: 0 success, 1 usage error, 2 runtime failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("{e}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::Weights(args) => exec_weights(args),
        Command::Estimate(args) => exec_estimate(args),
        Command::Tune(args) => exec_tune(args),
        Command::Benchmark(args) => exec_benchmark(args),
    };
    match result {
        Ok(()) => 0,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

#[derive(Debug)]
enum RunError {
    Usage(String),
    Runtime(String),
}

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

fn runtime(e: Error) -> RunError {
    RunError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "cbdm",
    version,
    about = "Covariate-balancing weights by discrepancy minimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute balancing weights and write them with a JSON summary.
    Weights(WeightsArgs),
    /// Compute weights, fit the weighted dose-response model, report the
    /// effect estimate and a 100-point curve.
    Estimate(EstimateArgs),
    /// Sweep a (lambda, cap) grid and write the ESS-vs-discrepancy frontier.
    Tune(TuneArgs),
    /// Run the simulation benchmark and write the RMSE table.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Input CSV; columns are matched to roles by the --treatment,
    /// --covariates and --outcome patterns.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output CSV of (row_index, weight).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary path (default: output path with a .summary.json suffix).
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Flat key = value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Discrepancy to minimize: mmd, finite, or w1.
    #[arg(long, value_parser = parse_ipm)]
    ipm: Option<IpmChoice>,
    /// Regularization strength on the weights (default 0).
    #[arg(long)]
    lambda: Option<f64>,
    /// Clipping level W; weights stay at or below W/n (default 5).
    #[arg(long)]
    cap: Option<f64>,
    /// Master seed; every random choice in the run derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Target construction: shuffle or product.
    #[arg(long, value_parser = parse_target)]
    target: Option<TargetChoice>,
    /// Shuffle rounds for the target (default scales with the data size).
    #[arg(long)]
    shuffle_rounds: Option<usize>,
    /// Iteration budget for the primal solvers (default 20000).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative objective tolerance for the primal solvers (default 1e-13).
    #[arg(long)]
    tol: Option<f64>,
    /// Which formulation to solve: primal or dual (dual is mmd-only).
    #[arg(long, value_parser = parse_solver)]
    solver: Option<SolverChoice>,
    /// Weight regularizer: quadratic, or entropy (dual solver only).
    #[arg(long, value_parser = parse_regularizer)]
    regularizer: Option<RegularizerChoice>,
    /// Worker threads; 0 means automatic. Falls back to CBDM_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Skip standardizing columns before kernel evaluation.
    #[arg(long)]
    no_standardize: bool,
    /// Column pattern for treatments (exact name or prefix*; default t*).
    #[arg(long)]
    treatment: Option<String>,
    /// Column pattern for covariates (default x*).
    #[arg(long)]
    covariates: Option<String>,
    /// Column pattern for the outcome (default y).
    #[arg(long)]
    outcome: Option<String>,
    /// Joint kernel: polyN, gaussian, or exponential (default gaussian).
    #[arg(long, value_parser = parse_kernel_token)]
    kernel_tau: Option<KernelToken>,
    /// Gaussian bandwidth: median or a positive number (default median).
    #[arg(long, value_parser = parse_bandwidth)]
    kernel_tau_bandwidth: Option<BandwidthChoice>,
    /// Treatment-only kernel the joint kernel is composed with: polyN or
    /// none (default poly1).
    #[arg(long, value_parser = parse_g)]
    kernel_g: Option<GChoice>,
}

#[derive(Args, Debug)]
struct WeightsArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dose-response model class: linear or krr.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelChoice>,
    /// Dose-response grid CSV path (default: output path with a .grid.csv
    /// suffix).
    #[arg(long)]
    grid_out: Option<PathBuf>,
    /// Ridge strength for the krr model (default scales with the kernel
    /// trace).
    #[arg(long)]
    zeta: Option<f64>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated lambda grid (default 0,0.001,0.01,0.1,1).
    #[arg(long)]
    lambdas: Option<String>,
    /// Comma-separated cap grid (default 2,5,10,100).
    #[arg(long)]
    caps: Option<String>,
    /// Also write a balance report CSV for the knee-point cell.
    #[arg(long)]
    balance_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Output CSV of (family, n, method, rmse, mc_se, replications, seed).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated response families (default all four).
    #[arg(long)]
    families: Option<String>,
    /// Comma-separated sample sizes (default 100,200,400).
    #[arg(long)]
    n_values: Option<String>,
    /// Replications per cell (default 100).
    #[arg(long)]
    replications: Option<usize>,
    /// Comma-separated methods (default all five).
    #[arg(long)]
    methods: Option<String>,
    /// True effect used by the data-generating process (default 1).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Approximate shuffle-target size per replication (default 100000).
    #[arg(long)]
    shuffle_target_size: Option<usize>,
    /// Outcome noise variance (default 0.1).
    #[arg(long)]
    noise_variance: Option<f64>,
    /// Worker threads; 0 means automatic. Falls back to CBDM_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IpmChoice {
    Mmd,
    Finite,
    W1,
}

impl IpmChoice {
    fn token(self) -> &'static str {
        match self {
            IpmChoice::Mmd => "mmd",
            IpmChoice::Finite => "finite",
            IpmChoice::W1 => "w1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetChoice {
    Shuffle,
    Product,
}

impl TargetChoice {
    fn token(self) -> &'static str {
        match self {
            TargetChoice::Shuffle => "shuffle",
            TargetChoice::Product => "product",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SolverChoice {
    Primal,
    Dual,
}

impl SolverChoice {
    fn token(self) -> &'static str {
        match self {
            SolverChoice::Primal => "primal",
            SolverChoice::Dual => "dual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RegularizerChoice {
    Quadratic,
    Entropy,
}

impl RegularizerChoice {
    fn token(self) -> &'static str {
        match self {
            RegularizerChoice::Quadratic => "quadratic",
            RegularizerChoice::Entropy => "entropy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelChoice {
    Linear,
    Krr,
}

impl ModelChoice {
    fn token(self) -> &'static str {
        match self {
            ModelChoice::Linear => "linear",
            ModelChoice::Krr => "krr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum KernelToken {
    Poly(u32),
    Gaussian,
    Exponential,
}

impl KernelToken {
    fn token(self) -> String {
        match self {
            KernelToken::Poly(p) => format!("poly{p}"),
            KernelToken::Gaussian => "gaussian".to_string(),
            KernelToken::Exponential => "exponential".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BandwidthChoice {
    Median,
    Fixed(f64),
}

impl BandwidthChoice {
    fn token(self) -> String {
        match self {
            BandwidthChoice::Median => "median".to_string(),
            BandwidthChoice::Fixed(h) => format!("{h}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GChoice {
    Poly(u32),
    None,
}

impl GChoice {
    fn token(self) -> String {
        match self {
            GChoice::Poly(p) => format!("poly{p}"),
            GChoice::None => "none".to_string(),
        }
    }
}

fn parse_ipm(s: &str) -> Result<IpmChoice, String> {
    match s {
        "mmd" => Ok(IpmChoice::Mmd),
        "finite" => Ok(IpmChoice::Finite),
        "w1" => Ok(IpmChoice::W1),
        _ => Err(format!("expected mmd, finite, or w1, got {s:?}")),
    }
}

fn parse_target(s: &str) -> Result<TargetChoice, String> {
    match s {
        "shuffle" => Ok(TargetChoice::Shuffle),
        "product" => Ok(TargetChoice::Product),
        _ => Err(format!("expected shuffle or product, got {s:?}")),
    }
}

fn parse_solver(s: &str) -> Result<SolverChoice, String> {
    match s {
        "primal" => Ok(SolverChoice::Primal),
        "dual" => Ok(SolverChoice::Dual),
        _ => Err(format!("expected primal or dual, got {s:?}")),
    }
}

fn parse_regularizer(s: &str) -> Result<RegularizerChoice, String> {
    match s {
        "quadratic" => Ok(RegularizerChoice::Quadratic),
        "entropy" => Ok(RegularizerChoice::Entropy),
        _ => Err(format!("expected quadratic or entropy, got {s:?}")),
    }
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    match s {
        "linear" => Ok(ModelChoice::Linear),
        "krr" => Ok(ModelChoice::Krr),
        _ => Err(format!("expected linear or krr, got {s:?}")),
    }
}

fn parse_poly_degree(s: &str) -> Result<u32, String> {
    let degree: u32 = s
        .strip_prefix("poly")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| format!("expected polyN with N >= 1, got {s:?}"))?;
    if degree < 1 {
        return Err(format!("expected polyN with N >= 1, got {s:?}"));
    }
    Ok(degree)
}

fn parse_kernel_token(s: &str) -> Result<KernelToken, String> {
    match s {
        "gaussian" => Ok(KernelToken::Gaussian),
        "exponential" => Ok(KernelToken::Exponential),
        _ => parse_poly_degree(s).map(KernelToken::Poly),
    }
}

fn parse_bandwidth(s: &str) -> Result<BandwidthChoice, String> {
    if s == "median" {
        return Ok(BandwidthChoice::Median);
    }
    let h: f64 = s
        .parse()
        .map_err(|_| format!("expected median or a positive number, got {s:?}"))?;
    if h > 0.0 && h.is_finite() {
        Ok(BandwidthChoice::Fixed(h))
    } else {
        Err(format!("bandwidth must be positive and finite, got {s}"))
    }
}

fn parse_g(s: &str) -> Result<GChoice, String> {
    if s == "none" {
        return Ok(GChoice::None);
    }
    parse_poly_degree(s).map(GChoice::Poly)
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("expected a number, got {s:?}"))
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.parse()
        .map_err(|_| format!("expected a nonnegative integer, got {s:?}"))
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse()
        .map_err(|_| format!("expected a nonnegative integer, got {s:?}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "input",
    "out",
    "summary_out",
    "grid_out",
    "balance_out",
    "ipm",
    "lambda",
    "cap",
    "seed",
    "target",
    "shuffle_rounds",
    "max_iter",
    "tol",
    "solver",
    "regularizer",
    "threads",
    "standardize",
    "treatment",
    "covariates",
    "outcome",
    "kernel.tau",
    "kernel.tau.bandwidth",
    "kernel.g",
    "model",
    "zeta",
    "lambdas",
    "caps",
    "families",
    "n_values",
    "replications",
    "methods",
    "beta",
    "shuffle_target_size",
    "noise_variance",
];

/// Key-value pairs from a flat config file; later duplicates win.
#[derive(Debug, Default)]
struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                usage(format!(
                    "{} line {}: expected `key = value`",
                    path.display(),
                    idx + 1
                ))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(usage(format!(
                    "{} line {}: unknown config key `{key}`",
                    path.display(),
                    idx + 1
                )));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    fn load_opt(path: Option<&PathBuf>) -> Result<Self, RunError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, RunError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => parse(v)
                .map(Some)
                .map_err(|e| usage(format!("config key `{key}`: {e}"))),
        }
    }
}

fn resolve_threads(cli: Option<usize>, file: Option<usize>) -> Result<usize, RunError> {
    if let Some(t) = cli.or(file) {
        return Ok(t);
    }
    match std::env::var("CBDM_THREADS") {
        Ok(v) => parse_usize(&v).map_err(|e| usage(format!("CBDM_THREADS: {e}"))),
        Err(_) => Ok(0),
    }
}

fn with_threads<T: Send>(
    threads: usize,
    f: impl FnOnce() -> Result<T, RunError> + Send,
) -> Result<T, RunError> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Runtime(format!("building the thread pool: {e}")))?;
    pool.install(f)
}

fn check_out_dir(path: &Path, flag: &str) -> Result<(), RunError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(usage(format!(
            "{flag} {}: directory {} does not exist",
            path.display(),
            dir.display()
        )))
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| RunError::Runtime(format!("creating a temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| RunError::Runtime(format!("writing {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| RunError::Runtime(format!("renaming into {}: {}", path.display(), e.error)))?;
    Ok(())
}

#[derive(Debug, Clone)]
struct ResolvedCommon {
    input: PathBuf,
    out: PathBuf,
    summary_out: PathBuf,
    ipm: IpmChoice,
    lambda: f64,
    cap: f64,
    seed: u64,
    target: TargetChoice,
    shuffle_rounds: Option<usize>,
    max_iter: usize,
    tol: f64,
    solver: SolverChoice,
    regularizer: RegularizerChoice,
    threads: usize,
    standardize: bool,
    treatment: String,
    covariates: String,
    outcome: String,
    kernel_tau: KernelToken,
    bandwidth: BandwidthChoice,
    kernel_g: GChoice,
}

fn resolve_common(a: &CommonArgs) -> Result<ResolvedCommon, RunError> {
    let file = FileConfig::load_opt(a.config.as_ref())?;

    let input = a
        .input
        .clone()
        .or_else(|| file.raw("input").map(PathBuf::from))
        .ok_or_else(|| usage("missing --input"))?;
    if !input.is_file() {
        return Err(usage(format!("--input {}: file not found", input.display())));
    }
    let out = a
        .out
        .clone()
        .or_else(|| file.raw("out").map(PathBuf::from))
        .ok_or_else(|| usage("missing --out"))?;
    check_out_dir(&out, "--out")?;
    let summary_out = a
        .summary_out
        .clone()
        .or_else(|| file.raw("summary_out").map(PathBuf::from))
        .unwrap_or_else(|| out.with_extension("summary.json"));
    check_out_dir(&summary_out, "--summary-out")?;

    let ipm = a
        .ipm
        .or(file.parsed("ipm", parse_ipm)?)
        .unwrap_or(IpmChoice::Mmd);
    let lambda = a
        .lambda
        .or(file.parsed("lambda", parse_f64)?)
        .unwrap_or(0.0);
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(usage(format!(
            "--lambda must be nonnegative and finite, got {lambda}"
        )));
    }
    let cap = a.cap.or(file.parsed("cap", parse_f64)?).unwrap_or(5.0);
    if !(cap >= 1.0) {
        return Err(usage(format!("--cap must be at least 1, got {cap}")));
    }
    let seed = a.seed.or(file.parsed("seed", parse_u64)?).unwrap_or(0);
    let target = a
        .target
        .or(file.parsed("target", parse_target)?)
        .unwrap_or(TargetChoice::Shuffle);
    let shuffle_rounds = match a
        .shuffle_rounds
        .or(file.parsed("shuffle_rounds", parse_usize)?)
    {
        Some(0) => return Err(usage("--shuffle-rounds must be at least 1")),
        other => other,
    };
    let max_iter = a
        .max_iter
        .or(file.parsed("max_iter", parse_usize)?)
        .unwrap_or(20_000);
    if max_iter == 0 {
        return Err(usage("--max-iter must be at least 1"));
    }
    let tol = a.tol.or(file.parsed("tol", parse_f64)?).unwrap_or(1e-13);
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(usage(format!("--tol must be positive, got {tol}")));
    }
    let solver = a
        .solver
        .or(file.parsed("solver", parse_solver)?)
        .unwrap_or(SolverChoice::Primal);
    let regularizer = a
        .regularizer
        .or(file.parsed("regularizer", parse_regularizer)?)
        .unwrap_or(RegularizerChoice::Quadratic);
    let threads = resolve_threads(a.threads, file.parsed("threads", parse_usize)?)?;
    let standardize = if a.no_standardize {
        false
    } else {
        file.parsed("standardize", parse_bool)?.unwrap_or(true)
    };
    let treatment = a
        .treatment
        .clone()
        .or_else(|| file.raw("treatment").map(String::from))
        .unwrap_or_else(|| "t*".to_string());
    let covariates = a
        .covariates
        .clone()
        .or_else(|| file.raw("covariates").map(String::from))
        .unwrap_or_else(|| "x*".to_string());
    let outcome = a
        .outcome
        .clone()
        .or_else(|| file.raw("outcome").map(String::from))
        .unwrap_or_else(|| "y".to_string());
    let kernel_tau = a
        .kernel_tau
        .or(file.parsed("kernel.tau", parse_kernel_token)?)
        .unwrap_or(KernelToken::Gaussian);
    let bandwidth = a
        .kernel_tau_bandwidth
        .or(file.parsed("kernel.tau.bandwidth", parse_bandwidth)?)
        .unwrap_or(BandwidthChoice::Median);
    let kernel_g = a
        .kernel_g
        .or(file.parsed("kernel.g", parse_g)?)
        .unwrap_or(GChoice::Poly(1));

    if solver == SolverChoice::Dual && ipm != IpmChoice::Mmd {
        return Err(usage("--solver dual supports --ipm mmd only"));
    }
    if regularizer == RegularizerChoice::Entropy && solver == SolverChoice::Primal {
        return Err(usage("--regularizer entropy requires --solver dual"));
    }

    Ok(ResolvedCommon {
        input,
        out,
        summary_out,
        ipm,
        lambda,
        cap,
        seed,
        target,
        shuffle_rounds,
        max_iter,
        tol,
        solver,
        regularizer,
        threads,
        standardize,
        treatment,
        covariates,
        outcome,
        kernel_tau,
        bandwidth,
        kernel_g,
    })
}

struct Prepared {
    data: Dataset,
    work: Dataset,
    target: TargetSample,
    rounds: Option<usize>,
}

fn prepare(c: &ResolvedCommon) -> Result<Prepared, RunError> {
    let schema = Schema::new([
        (c.treatment.clone(), ColumnRole::Treatment),
        (c.covariates.clone(), ColumnRole::Covariate),
        (c.outcome.clone(), ColumnRole::Outcome),
    ]);
    let data = load_csv(&c.input, &schema).map_err(runtime)?;
    let work = if c.standardize {
        standardize(&data).map_err(runtime)?.0
    } else {
        data.clone()
    };
    let (target, rounds) = match c.target {
        TargetChoice::Shuffle => {
            let rounds = c
                .shuffle_rounds
                .unwrap_or_else(|| default_shuffle_rounds(data.n()));
            let target = build_shuffle(&work, rounds, c.seed).map_err(runtime)?;
            (target, Some(rounds))
        }
        TargetChoice::Product => (build_marginal_product(&work).map_err(runtime)?, None),
    };
    Ok(Prepared {
        data,
        work,
        target,
        rounds,
    })
}

fn resolve_kernel(c: &ResolvedCommon, work: &Dataset) -> Result<(KernelSpec, Option<f64>), Error> {
    let (tau, bandwidth_value) = match c.kernel_tau {
        KernelToken::Poly(p) => (KernelSpec::polynomial(p)?, None),
        KernelToken::Exponential => (KernelSpec::exponential(), None),
        KernelToken::Gaussian => {
            let h = match c.bandwidth {
                BandwidthChoice::Median => median_heuristic_bandwidth(work.z_matrix().view())?,
                BandwidthChoice::Fixed(h) => h,
            };
            (KernelSpec::gaussian(h)?, Some(h))
        }
    };
    let spec = match c.kernel_g {
        GChoice::None => tau,
        GChoice::Poly(p) => KernelSpec::composed(tau, KernelSpec::polynomial(p)?),
    };
    Ok((spec, bandwidth_value))
}

struct SolveOutcome {
    solution: WeightSolution,
    bandwidth_value: Option<f64>,
    lambda_effective: Option<f64>,
}

fn solve_weights(c: &ResolvedCommon, prep: &Prepared) -> Result<SolveOutcome, RunError> {
    let solver_cfg = SolverConfig {
        lambda: c.lambda,
        cap: c.cap,
        max_iterations: c.max_iter,
        objective_tolerance: c.tol,
        seed: c.seed,
        ..SolverConfig::default()
    };
    let mut bandwidth_value = None;
    let mut lambda_effective = None;
    let solution = match (c.ipm, c.solver) {
        (IpmChoice::Mmd, SolverChoice::Primal) => {
            let (spec, bw) = resolve_kernel(c, &prep.work).map_err(runtime)?;
            bandwidth_value = bw;
            let form = mmd_form(&spec, &prep.work, &prep.target).map_err(runtime)?;
            solve_mmd(&form, &solver_cfg).map_err(runtime)?
        }
        (IpmChoice::Mmd, SolverChoice::Dual) => {
            let (spec, bw) = resolve_kernel(c, &prep.work).map_err(runtime)?;
            bandwidth_value = bw;
            let pair = match c.regularizer {
                RegularizerChoice::Quadratic => LegendrePair::quadratic(c.cap),
                RegularizerChoice::Entropy => LegendrePair::entropic(c.cap),
            }
            .map_err(runtime)?;
            let dual =
                solve_dual(&spec, &prep.work, &prep.target, &pair, c.lambda).map_err(runtime)?;
            lambda_effective = Some(dual.lambda_effective);
            weights_from_dual(&dual, &pair, &prep.work).map_err(runtime)?
        }
        (IpmChoice::Finite, SolverChoice::Primal) => {
            let moments = npcbgps_moments(&prep.work, &prep.target).map_err(runtime)?;
            solve_finite_class(&moments, &solver_cfg).map_err(runtime)?
        }
        (IpmChoice::W1, SolverChoice::Primal) => {
            if c.lambda == 0.0 {
                solve_w1_nearest(&prep.work, &prep.target).map_err(runtime)?
            } else {
                solve_w1_transport(&prep.work, &prep.target, &solver_cfg).map_err(runtime)?
            }
        }
        (_, SolverChoice::Dual) => {
            return Err(usage("--solver dual supports --ipm mmd only"));
        }
    };
    Ok(SolveOutcome {
        solution,
        bandwidth_value,
        lambda_effective,
    })
}

fn weights_csv(solution: &WeightSolution) -> Result<Vec<u8>, RunError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let to_runtime = |e: csv::Error| RunError::Runtime(format!("encoding weights CSV: {e}"));
    writer
        .write_record(["row_index", "weight"])
        .map_err(to_runtime)?;
    for (i, w) in solution.weights.iter().enumerate() {
        writer
            .write_record([i.to_string(), format!("{w}")])
            .map_err(to_runtime)?;
    }
    writer
        .into_inner()
        .map_err(|e| RunError::Runtime(format!("encoding weights CSV: {e}")))
}

fn resolved_config_json(c: &ResolvedCommon, rounds: Option<usize>) -> serde_json::Value {
    json!({
        "input": c.input.display().to_string(),
        "out": c.out.display().to_string(),
        "summary_out": c.summary_out.display().to_string(),
        "ipm": c.ipm.token(),
        "lambda": c.lambda,
        "cap": c.cap,
        "seed": c.seed,
        "target": c.target.token(),
        "shuffle_rounds": rounds,
        "max_iter": c.max_iter,
        "tol": c.tol,
        "solver": c.solver.token(),
        "regularizer": c.regularizer.token(),
        "threads": c.threads,
        "standardize": c.standardize,
        "treatment": c.treatment,
        "covariates": c.covariates,
        "outcome": c.outcome,
        "kernel.tau": c.kernel_tau.token(),
        "kernel.tau.bandwidth": c.bandwidth.token(),
        "kernel.g": c.kernel_g.token(),
    })
}

fn summary_json(
    subcommand: &str,
    c: &ResolvedCommon,
    prep: &Prepared,
    outcome: &SolveOutcome,
) -> serde_json::Value {
    let sol = &outcome.solution;
    let mut summary = json!({
        "subcommand": subcommand,
        "n": prep.data.n(),
        "d_treatment": prep.data.d_treatment(),
        "d_covariate": prep.data.d_covariate(),
        "ipm_value": sol.ipm_value,
        "ess": sol.ess,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "objective": sol.objective,
        "lambda": c.lambda,
        "cap": c.cap,
        "seed": c.seed,
        "config": resolved_config_json(c, prep.rounds),
    });
    if let Some(raw) = sol.raw_weight_sum {
        summary["raw_weight_sum"] = json!(raw);
    }
    if let Some(le) = outcome.lambda_effective {
        summary["lambda_effective"] = json!(le);
    }
    if let Some(h) = outcome.bandwidth_value {
        summary["config"]["kernel.tau.bandwidth_value"] = json!(h);
    }
    summary
}

fn write_summary(path: &Path, summary: &serde_json::Value) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(summary)
        .map_err(|e| RunError::Runtime(format!("encoding the JSON summary: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

fn exec_weights(args: WeightsArgs) -> Result<(), RunError> {
    let c = resolve_common(&args.common)?;
    with_threads(c.threads, || {
        let prep = prepare(&c)?;
        let outcome = solve_weights(&c, &prep)?;
        let csv = weights_csv(&outcome.solution)?;
        let summary = summary_json("weights", &c, &prep, &outcome);
        atomic_write(&c.out, &csv)?;
        write_summary(&c.summary_out, &summary)
    })
}

fn exec_estimate(args: EstimateArgs) -> Result<(), RunError> {
    let c = resolve_common(&args.common)?;
    let file = FileConfig::load_opt(args.common.config.as_ref())?;
    let model = args
        .model
        .or(file.parsed("model", parse_model)?)
        .unwrap_or(ModelChoice::Linear);
    let zeta = args.zeta.or(file.parsed("zeta", parse_f64)?);
    if let Some(z) = zeta {
        if !(z > 0.0) || !z.is_finite() {
            return Err(usage(format!("--zeta must be positive, got {z}")));
        }
    }
    let grid_out = args
        .grid_out
        .or_else(|| file.raw("grid_out").map(PathBuf::from))
        .unwrap_or_else(|| c.out.with_extension("grid.csv"));
    check_out_dir(&grid_out, "--grid-out")?;

    with_threads(c.threads, || {
        let prep = prepare(&c)?;
        if prep.data.outcomes.is_none() {
            return Err(usage(format!(
                "estimate needs an outcome column matching --outcome {}",
                c.outcome
            )));
        }
        if prep.data.d_treatment() != 1 {
            return Err(usage(
                "estimate needs exactly one treatment column; got a multivariate treatment",
            ));
        }
        let outcome = solve_weights(&c, &prep)?;
        let w = outcome.solution.weights.view();
        let beta_hat = estimate_effect(&prep.data, w).map_err(runtime)?;

        let class = match model {
            ModelChoice::Linear => ModelClass::Linear,
            ModelChoice::Krr => {
                let h = median_heuristic_bandwidth(prep.data.treatments.view())
                    .map_err(runtime)?;
                ModelClass::KernelRidge {
                    spec: KernelSpec::gaussian(h).map_err(runtime)?,
                    zeta,
                }
            }
        };
        let fitted = fit_weighted(&prep.data, w, &class).map_err(runtime)?;
        let grid = treatment_grid(&prep.data, 100);
        let grid_matrix = grid.clone().insert_axis(Axis(1));
        let mu = fitted.predict(grid_matrix.view()).map_err(runtime)?;

        let mut writer = csv::Writer::from_writer(Vec::new());
        let to_runtime = |e: csv::Error| RunError::Runtime(format!("encoding grid CSV: {e}"));
        writer.write_record(["t", "mu"]).map_err(to_runtime)?;
        for (t, m) in grid.iter().zip(mu.iter()) {
            writer
                .write_record([format!("{t}"), format!("{m}")])
                .map_err(to_runtime)?;
        }
        let grid_csv = writer
            .into_inner()
            .map_err(|e| RunError::Runtime(format!("encoding grid CSV: {e}")))?;

        let mut summary = summary_json("estimate", &c, &prep, &outcome);
        summary["beta_hat"] = json!(beta_hat);
        summary["model"] = json!(model.token());
        summary["weighted_risk"] = json!(fitted.weighted_risk);
        summary["grid_out"] = json!(grid_out.display().to_string());

        let weights = weights_csv(&outcome.solution)?;
        atomic_write(&c.out, &weights)?;
        atomic_write(&grid_out, &grid_csv)?;
        write_summary(&c.summary_out, &summary)
    })
}

fn parse_list<T>(
    raw: &str,
    flag: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, RunError> {
    let items: Result<Vec<T>, String> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(&parse)
        .collect();
    let items = items.map_err(|e| usage(format!("{flag}: {e}")))?;
    if items.is_empty() {
        return Err(usage(format!("{flag}: list must not be empty")));
    }
    Ok(items)
}

fn exec_tune(args: TuneArgs) -> Result<(), RunError> {
    let c = resolve_common(&args.common)?;
    if c.ipm != IpmChoice::Mmd {
        return Err(usage("tune sweeps the mmd discrepancy; use --ipm mmd"));
    }
    if c.solver != SolverChoice::Primal {
        return Err(usage("tune uses the primal solver; drop --solver dual"));
    }
    let file = FileConfig::load_opt(args.common.config.as_ref())?;
    let lambdas_raw = args
        .lambdas
        .or_else(|| file.raw("lambdas").map(String::from))
        .unwrap_or_else(|| "0,0.001,0.01,0.1,1".to_string());
    let caps_raw = args
        .caps
        .or_else(|| file.raw("caps").map(String::from))
        .unwrap_or_else(|| "2,5,10,100".to_string());
    let lambdas = parse_list(&lambdas_raw, "--lambdas", parse_f64)?;
    let caps = parse_list(&caps_raw, "--caps", parse_f64)?;
    if lambdas.iter().any(|l| *l < 0.0 || !l.is_finite()) {
        return Err(usage("--lambdas: every value must be nonnegative and finite"));
    }
    if caps.iter().any(|w| !(*w >= 1.0)) {
        return Err(usage("--caps: every value must be at least 1"));
    }
    let balance_out = args
        .balance_out
        .or_else(|| file.raw("balance_out").map(PathBuf::from));
    if let Some(path) = &balance_out {
        check_out_dir(path, "--balance-out")?;
    }

    with_threads(c.threads, || {
        let prep = prepare(&c)?;
        let (spec, _) = resolve_kernel(&c, &prep.work).map_err(runtime)?;
        let base = SolverConfig {
            lambda: c.lambda,
            cap: c.cap,
            max_iterations: c.max_iter,
            objective_tolerance: c.tol,
            seed: c.seed,
            ..SolverConfig::default()
        };
        let points = frontier_with_config(&prep.work, &prep.target, &spec, &lambdas, &caps, &base)
            .map_err(runtime)?;
        let knee = knee_point(&points);

        let mut writer = csv::Writer::from_writer(Vec::new());
        let to_runtime = |e: csv::Error| RunError::Runtime(format!("encoding frontier CSV: {e}"));
        writer
            .write_record(["lambda", "cap", "ipm_value", "ess", "converged", "knee", "error"])
            .map_err(to_runtime)?;
        for (i, p) in points.iter().enumerate() {
            writer
                .write_record([
                    format!("{}", p.lambda),
                    format!("{}", p.cap),
                    format!("{}", p.ipm_value),
                    format!("{}", p.ess),
                    p.converged.to_string(),
                    (knee == Some(i)).to_string(),
                    p.error.clone().unwrap_or_default(),
                ])
                .map_err(to_runtime)?;
        }
        let frontier_csv = writer
            .into_inner()
            .map_err(|e| RunError::Runtime(format!("encoding frontier CSV: {e}")))?;
        atomic_write(&c.out, &frontier_csv)?;

        if let Some(path) = &balance_out {
            let idx = knee.ok_or_else(|| {
                RunError::Runtime("every frontier cell failed; no knee point to report".into())
            })?;
            let cell = &points[idx];
            let form = mmd_form(&spec, &prep.work, &prep.target).map_err(runtime)?;
            let cell_cfg = SolverConfig {
                lambda: cell.lambda,
                cap: cell.cap,
                ..base.clone()
            };
            let solution = solve_mmd(&form, &cell_cfg).map_err(runtime)?;
            let report = balance_report(&prep.work, &prep.target, solution.weights.view())
                .map_err(runtime)?;
            let mut writer = csv::Writer::from_writer(Vec::new());
            let to_runtime =
                |e: csv::Error| RunError::Runtime(format!("encoding balance CSV: {e}"));
            writer
                .write_record(["kind", "name", "weighted", "target", "gap"])
                .map_err(to_runtime)?;
            for m in &report.moments {
                writer
                    .write_record([
                        "moment".to_string(),
                        m.name.clone(),
                        format!("{}", m.weighted),
                        format!("{}", m.target),
                        format!("{}", m.gap()),
                    ])
                    .map_err(to_runtime)?;
            }
            for (name, value) in &report.correlations {
                writer
                    .write_record([
                        "correlation".to_string(),
                        name.clone(),
                        format!("{value}"),
                        String::new(),
                        String::new(),
                    ])
                    .map_err(to_runtime)?;
            }
            let balance_csv = writer
                .into_inner()
                .map_err(|e| RunError::Runtime(format!("encoding balance CSV: {e}")))?;
            atomic_write(path, &balance_csv)?;
        }
        Ok(())
    })
}

fn exec_benchmark(args: BenchmarkArgs) -> Result<(), RunError> {
    let file = FileConfig::load_opt(args.config.as_ref())?;
    let out = args
        .out
        .or_else(|| file.raw("out").map(PathBuf::from))
        .ok_or_else(|| usage("missing --out"))?;
    check_out_dir(&out, "--out")?;

    let families_raw = args
        .families
        .or_else(|| file.raw("families").map(String::from))
        .unwrap_or_else(|| "absolute,quadratic,cubic,sinusoidal".to_string());
    let families = parse_list(&families_raw, "--families", |s| {
        ResponseFamily::parse(s).map_err(|e| e.to_string())
    })?;
    let n_raw = args
        .n_values
        .or_else(|| file.raw("n_values").map(String::from))
        .unwrap_or_else(|| "100,200,400".to_string());
    let n_values = parse_list(&n_raw, "--n-values", parse_usize)?;
    if n_values.iter().any(|&n| n < 10) {
        return Err(usage("--n-values: every sample size must be at least 10"));
    }
    let methods_raw = args
        .methods
        .or_else(|| file.raw("methods").map(String::from))
        .unwrap_or_else(|| "unweighted,cbdm_wass,cbdm_poly4,cbdm_gauss,cbdm_exp".to_string());
    let methods = parse_list(&methods_raw, "--methods", |s| {
        BenchMethod::parse(s).map_err(|e| e.to_string())
    })?;
    let replications = args
        .replications
        .or(file.parsed("replications", parse_usize)?)
        .unwrap_or(100);
    if replications < 1 {
        return Err(usage("--replications must be at least 1"));
    }
    let beta = args.beta.or(file.parsed("beta", parse_f64)?).unwrap_or(1.0);
    if !beta.is_finite() {
        return Err(usage(format!("--beta must be finite, got {beta}")));
    }
    let cap = args.cap.or(file.parsed("cap", parse_f64)?).unwrap_or(5.0);
    if !(cap >= 1.0) {
        return Err(usage(format!("--cap must be at least 1, got {cap}")));
    }
    let lambda = args
        .lambda
        .or(file.parsed("lambda", parse_f64)?)
        .unwrap_or(0.0);
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(usage(format!(
            "--lambda must be nonnegative and finite, got {lambda}"
        )));
    }
    let seed = args.seed.or(file.parsed("seed", parse_u64)?).unwrap_or(0);
    let shuffle_target_size = args
        .shuffle_target_size
        .or(file.parsed("shuffle_target_size", parse_usize)?)
        .unwrap_or(100_000);
    if shuffle_target_size == 0 {
        return Err(usage("--shuffle-target-size must be at least 1"));
    }
    let noise_variance = args
        .noise_variance
        .or(file.parsed("noise_variance", parse_f64)?)
        .unwrap_or(0.1);
    if !(noise_variance >= 0.0) {
        return Err(usage(format!(
            "--noise-variance must be nonnegative, got {noise_variance}"
        )));
    }
    let threads = resolve_threads(args.threads, file.parsed("threads", parse_usize)?)?;

    with_threads(threads, || {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let to_runtime = |e: csv::Error| RunError::Runtime(format!("encoding benchmark CSV: {e}"));
        writer
            .write_record(["family", "n", "method", "rmse", "mc_se", "replications", "seed"])
            .map_err(to_runtime)?;
        for &family in &families {
            let mut cfg = ScenarioConfig::new(family);
            cfg.beta = beta;
            cfg.n_values = n_values.clone();
            cfg.replications = replications;
            cfg.seed = seed;
            cfg.methods = methods.clone();
            cfg.cap = cap;
            cfg.lambda = lambda;
            cfg.shuffle_target_size = shuffle_target_size;
            cfg.noise_variance = noise_variance;
            let cells = run_benchmark(&cfg).map_err(runtime)?;
            for cell in cells {
                writer
                    .write_record([
                        cell.family.tag().to_string(),
                        cell.n.to_string(),
                        cell.method.tag().to_string(),
                        format!("{}", cell.rmse),
                        format!("{}", cell.mc_se),
                        cell.replications.to_string(),
                        cell.seed.to_string(),
                    ])
                    .map_err(to_runtime)?;
            }
        }
        let table = writer
            .into_inner()
            .map_err(|e| RunError::Runtime(format!("encoding benchmark CSV: {e}")))?;
        atomic_write(&out, &table)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_csv(path: &Path, n: usize, seed: u64, with_outcome: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut text = String::from(if with_outcome { "t,x1,x2,y\n" } else { "t,x1,x2\n" });
        for _ in 0..n {
            let x1 = rng.random_range(-1.0..1.0f64);
            let x2 = rng.random_range(-1.0..1.0f64);
            let t = 0.3 * x1 + rng.random_range(0.0..1.0f64);
            if with_outcome {
                let y = t + x1 + 0.5 * x2 + 0.1 * rng.random_range(-1.0..1.0f64);
                text.push_str(&format!("{t},{x1},{x2},{y}\n"));
            } else {
                text.push_str(&format!("{t},{x1},{x2}\n"));
            }
        }
        std::fs::write(path, text).unwrap();
    }

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("cbdm").chain(args.iter().copied()))
    }

    fn read_weights(path: &Path) -> Vec<f64> {
        let text = std::fs::read_to_string(path).unwrap();
        text.lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run_args(&["weights", "--bogus"]), 1);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run_args(&["--help"]), 0);
        assert_eq!(run_args(&["weights", "--help"]), 0);
    }

    #[test]
    fn missing_or_absent_input_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("w.csv");
        assert_eq!(run_args(&["weights", "--out", out.to_str().unwrap()]), 1);
        assert_eq!(
            run_args(&[
                "weights",
                "--input",
                dir.path().join("missing.csv").to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]),
            1
        );
    }

    #[test]
    fn weights_writes_a_simplex_vector_and_a_summary() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 30, 1, true);
        let out = dir.path().join("w.csv");
        let code = run_args(&[
            "weights",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--ipm",
            "mmd",
            "--lambda",
            "0",
            "--cap",
            "5",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let weights = read_weights(&out);
        assert_eq!(weights.len(), 30);
        let sum: f64 = weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(weights.iter().all(|w| *w >= 0.0 && *w <= 5.0 / 30.0 + 1e-12));

        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("w.summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["subcommand"], "weights");
        assert!(summary["ess"].as_f64().unwrap() >= 1.0);
        assert_eq!(summary["config"]["ipm"], "mmd");
        assert_eq!(summary["config"]["seed"], 7);
        assert!(summary["config"]["kernel.tau.bandwidth_value"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 25, 2, true);
        let out = dir.path().join("w.csv");
        let args = [
            "weights",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(run_args(&args), 0);
        let first_csv = std::fs::read(&out).unwrap();
        let first_summary = std::fs::read(dir.path().join("w.summary.json")).unwrap();
        assert_eq!(run_args(&args), 0);
        assert_eq!(std::fs::read(&out).unwrap(), first_csv);
        assert_eq!(
            std::fs::read(dir.path().join("w.summary.json")).unwrap(),
            first_summary
        );
    }

    #[test]
    fn config_file_fills_defaults_and_flags_override_it() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 20, 3, true);
        let config = dir.path().join("run.cfg");
        std::fs::write(
            &config,
            "# solver settings\nlambda = 0.5\nkernel.tau = poly2\n",
        )
        .unwrap();
        let out = dir.path().join("w.csv");

        let code = run_args(&[
            "weights",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("w.summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["lambda"], 0.5);
        assert_eq!(summary["config"]["kernel.tau"], "poly2");

        let code = run_args(&[
            "weights",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--config",
            config.to_str().unwrap(),
            "--lambda",
            "0.25",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("w.summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["lambda"], 0.25);
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 20, 4, true);
        let config = dir.path().join("run.cfg");
        std::fs::write(&config, "lambad = 0.5\n").unwrap();
        let code = run_args(&[
            "weights",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("w.csv").to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn w1_and_finite_paths_produce_weights() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 24, 5, true);
        for ipm in ["w1", "finite"] {
            let out = dir.path().join(format!("{ipm}.csv"));
            let code = run_args(&[
                "weights",
                "--input",
                input.to_str().unwrap(),
                "--ipm",
                ipm,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "ipm {ipm}");
            let weights = read_weights(&out);
            assert_eq!(weights.len(), 24);
            assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dual_solver_reports_the_raw_weight_sum() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 20, 6, true);
        let out = dir.path().join("w.csv");
        let code = run_args(&[
            "weights",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--solver",
            "dual",
            "--lambda",
            "0.1",
            "--kernel-tau",
            "poly2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("w.summary.json")).unwrap())
                .unwrap();
        let raw = summary["raw_weight_sum"].as_f64().unwrap();
        assert!((raw - 1.0).abs() < 1e-3, "raw weight sum {raw}");
        assert!(summary["lambda_effective"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn conflicting_solver_flags_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 20, 7, true);
        let out = dir.path().join("w.csv");
        let base = [
            "weights",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--out",
            out.to_str().unwrap(),
        ];
        let mut dual_w1 = base.to_vec();
        dual_w1.extend(["--solver", "dual", "--ipm", "w1"]);
        assert_eq!(run_args(&dual_w1), 1);
        let mut entropy_primal = base.to_vec();
        entropy_primal.extend(["--regularizer", "entropy"]);
        assert_eq!(run_args(&entropy_primal), 1);
    }

    #[test]
    fn estimate_writes_effect_and_grid() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 40, 8, true);
        let out = dir.path().join("est.csv");
        let code = run_args(&[
            "estimate",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--kernel-tau",
            "poly2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let summary: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("est.summary.json")).unwrap(),
        )
        .unwrap();
        assert!(summary["beta_hat"].as_f64().unwrap().is_finite());
        assert_eq!(summary["model"], "linear");
        let grid = std::fs::read_to_string(dir.path().join("est.grid.csv")).unwrap();
        assert_eq!(grid.lines().count(), 101);
        assert!(grid.starts_with("t,mu"));
    }

    #[test]
    fn estimate_krr_model_predicts_finite_values() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 25, 9, true);
        let out = dir.path().join("est.csv");
        let code = run_args(&[
            "estimate",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--kernel-tau",
            "poly2",
            "--model",
            "krr",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let grid = std::fs::read_to_string(dir.path().join("est.grid.csv")).unwrap();
        for line in grid.lines().skip(1) {
            let mu: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(mu.is_finite());
        }
    }

    #[test]
    fn estimate_without_outcomes_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 20, 10, false);
        let code = run_args(&[
            "estimate",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--out",
            dir.path().join("est.csv").to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn tune_writes_the_frontier_and_flags_one_knee() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("d.csv");
        sample_csv(&input, 25, 11, true);
        let out = dir.path().join("frontier.csv");
        let balance = dir.path().join("balance.csv");
        let code = run_args(&[
            "tune",
            "--input",
            input.to_str().unwrap(),
            "--shuffle-rounds",
            "8",
            "--kernel-tau",
            "poly2",
            "--lambdas",
            "0,0.1",
            "--caps",
            "5",
            "--balance-out",
            balance.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("lambda,cap"));
        let knees = lines[1..]
            .iter()
            .filter(|l| l.split(',').nth(5) == Some("true"))
            .count();
        assert_eq!(knees, 1);
        let balance_text = std::fs::read_to_string(&balance).unwrap();
        assert!(balance_text.starts_with("kind,name,weighted,target,gap"));
        assert!(balance_text.lines().count() > 3);
    }

    #[test]
    fn benchmark_writes_one_row_per_cell_and_matches_across_thread_counts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bench.csv");
        let base = [
            "benchmark",
            "--families",
            "quadratic",
            "--n-values",
            "30",
            "--replications",
            "4",
            "--methods",
            "unweighted,cbdm_poly4",
            "--shuffle-target-size",
            "300",
            "--seed",
            "2",
            "--out",
            out.to_str().unwrap(),
        ];
        let mut serial = base.to_vec();
        serial.extend(["--threads", "1"]);
        assert_eq!(run_args(&serial), 0);
        let serial_bytes = std::fs::read(&out).unwrap();
        let text = String::from_utf8(serial_bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("family,n,method,rmse,mc_se,replications,seed"));

        let mut parallel = base.to_vec();
        parallel.extend(["--threads", "3"]);
        assert_eq!(run_args(&parallel), 0);
        assert_eq!(std::fs::read(&out).unwrap(), serial_bytes);
    }
}
