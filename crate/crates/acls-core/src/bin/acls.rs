//! Batch front end for the capped least squares toolkit: regression fits,
//! the simulation harness, loss-landscape profiles, breakdown probes,
//! background extraction from frame sequences, and blind inpainting.

use acls_core::container;
use acls_core::error::AclsError;
use acls_core::estimators::{
    fit_ahr, fit_exact, fit_hybrid, fit_lts, fit_ols, fit_rgd, ExactConfig, ExactStrategy,
    FitResult, RgdConfig,
};
use acls_core::inference::robust_inference;
use acls_core::inpaint::{dct_dictionary, fit_inpaint, patchify, psnr, reassemble, Dictionary};
use acls_core::loss::{Dataset, LossConfig, TauRule};
use acls_core::numerics::Matrix;
use acls_core::pgm::{read_pgm, write_pgm};
use acls_core::simulation::{
    breakdown_probe, derive_seed, landscape_profile, run_replication, BreakdownEstimator,
    EstimatorKind, HarnessConfig, ScenarioConfig,
};
use acls_core::subspace::{fit_subspace_acls, fit_subspace_ols, mad_sigma, median_slice};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

const EXIT_INPUT: i32 = 2;
const EXIT_COMPUTE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "acls",
    version,
    about = "Adaptive capped least squares: robust regression, simulation, background recovery, inpainting"
)]
struct Cli {
    /// Worker threads (falls back to ACLS_THREADS, then machine parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator to a CSV dataset and emit the result as JSON
    Fit(FitArgs),
    /// Replicated scenario study; emits a CSV summary per estimator
    Simulate(SimulateArgs),
    /// Capped-loss landscape curves over a coefficient grid
    Landscape(LandscapeArgs),
    /// Estimate norms under growing leverage-point contamination
    Breakdown(BreakdownArgs),
    /// Robust low-rank background extraction from a PGM frame sequence
    Background(BackgroundArgs),
    /// Blind inpainting of a PGM image against a fixed dictionary
    Inpaint(InpaintArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Exact,
    Rgd,
    Hybrid,
    Ols,
    Ahr,
    Lts,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TauRuleArg {
    /// tau = sqrt(n) / loglog(n)
    SqrtNLoglogN,
    /// tau = c * sigma_hat * sqrt(n) / loglog(n), sigma_hat from a MAD
    Mad,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with a header row; all non-response columns are predictors
    csv: PathBuf,
    /// Response column name (default: last column)
    #[arg(long)]
    y: Option<String>,
    #[arg(long, value_enum, default_value_t = SolverArg::Rgd)]
    solver: SolverArg,
    /// Explicit resistance parameter; overrides --tau-rule
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = TauRuleArg::SqrtNLoglogN)]
    tau_rule: TauRuleArg,
    /// Constant c for the MAD rule
    #[arg(long, default_value_t = 1.0)]
    mad_c: f64,
    /// Prepend an intercept column
    #[arg(long, default_value_t = false)]
    intercept: bool,
    #[arg(long, default_value_t = 200)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LTS trim count (default: floor((n + p + 1) / 2))
    #[arg(long)]
    h: Option<usize>,
    /// LTS elemental subsets
    #[arg(long, default_value_t = 500)]
    n_subsets: usize,
    #[arg(long, default_value_t = 0.3)]
    subsample_fraction: f64,
    #[arg(long, default_value_t = 10)]
    subsample_runs: usize,
    /// Exact-solver refusal threshold
    #[arg(long, default_value_t = 24)]
    max_n: usize,
    /// Exact-solver search strategy
    #[arg(long, value_enum, default_value_t = StrategyArg::BranchAndBound)]
    strategy: StrategyArg,
    /// Attach the plug-in inference report
    #[arg(long, default_value_t = false)]
    infer: bool,
    /// Output path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Enumerate,
    BranchAndBound,
}

impl From<StrategyArg> for ExactStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Enumerate => ExactStrategy::Enumerate,
            StrategyArg::BranchAndBound => ExactStrategy::BranchAndBound,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    scenario: u8,
    /// Outlier means; one summary block per value
    #[arg(long, value_delimiter = ',', default_value = "10")]
    a: Vec<f64>,
    #[arg(long, default_value_t = 0.10)]
    lambda: f64,
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Model columns including the intercept
    #[arg(long, default_value_t = 6)]
    d: usize,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    /// Comma-separated subset of: ols, ahr, lts, rgd, hybrid, exact
    #[arg(long, value_delimiter = ',', default_value = "ols,ahr,lts,rgd")]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 200)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    lts_subsets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Output path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct LandscapeArgs {
    #[arg(long, default_value_t = 1)]
    case: u8,
    #[arg(long = "n-list", value_delimiter = ',', default_value = "50,100,200,400")]
    n_list: Vec<usize>,
    /// Grid as lo,hi,steps
    #[arg(long, default_value = "-5,15,401", allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BreakdownArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Contaminated row counts
    #[arg(long, value_delimiter = ',', default_value = "0,1,9")]
    contam_counts: Vec<usize>,
    /// Leverage magnitudes
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    magnitudes: Vec<f64>,
    #[arg(long, value_enum, default_value_t = BreakdownArg::Exact)]
    estimator: BreakdownArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BreakdownArg {
    Exact,
    Ahr,
    Ols,
}

#[derive(Args)]
struct BackgroundArgs {
    /// Directory of same-sized binary PGM frames (read in name order)
    frames: PathBuf,
    #[arg(long, default_value_t = 10)]
    q: usize,
    /// Explicit tau; otherwise the MAD rule with --tau-scale is used
    #[arg(long)]
    tau: Option<f64>,
    /// Constant c in tau = c * sigma_hat * sqrt(n) / loglog(n)
    #[arg(long, default_value_t = 1.0)]
    tau_scale: f64,
    #[arg(long, value_enum, default_value_t = BackgroundMethod::Acls)]
    method: BackgroundMethod,
    #[arg(long, default_value_t = 1e-5)]
    eps_opt: f64,
    #[arg(long, default_value_t = 500)]
    max_sweeps: usize,
    /// Output directory for background/foreground frames, the model, and
    /// metrics
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackgroundMethod {
    Acls,
    Ols,
}

#[derive(Args)]
struct InpaintArgs {
    /// Damaged 8-bit binary PGM image
    image: PathBuf,
    /// Dictionary file (.csv dense rows or ACLSMAT1 container); defaults to
    /// an overcomplete DCT
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Atom count for the generated DCT dictionary
    #[arg(long, default_value_t = 256)]
    dct_atoms: usize,
    #[arg(long, default_value_t = 15)]
    patch: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Explicit tau on the [0,1] patch scale; otherwise the MAD rule
    #[arg(long)]
    tau: Option<f64>,
    /// Constant c in tau = c * sigma_hat * sqrt(n) / loglog(n)
    #[arg(long, default_value_t = 1.0)]
    tau_scale: f64,
    #[arg(long, default_value_t = 50)]
    max_rounds: usize,
    /// Clean reference image for PSNR reporting
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Restored image output path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    args: Vec<String>,
    seed: u64,
    version: String,
    wall_time_s: f64,
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: msg.into(),
        }
    }

    fn compute(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_COMPUTE,
            message: msg.into(),
        }
    }
}

/// Malformed inputs and bad parameters exit 2; solver failures exit 3.
fn input_err(e: AclsError) -> CliError {
    match e {
        AclsError::Io(_) | AclsError::Parse(_) | AclsError::InvalidArgument(_) => {
            CliError::input(e.to_string())
        }
        other => CliError::compute(other.to_string()),
    }
}

fn compute_err(e: AclsError) -> CliError {
    match e {
        AclsError::InvalidArgument(_) => CliError::input(e.to_string()),
        other => CliError::compute(other.to_string()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads.or_else(|| {
        std::env::var("ACLS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    }) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let started = Instant::now();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a, started, &args),
        Command::Simulate(a) => cmd_simulate(a, started, &args),
        Command::Landscape(a) => cmd_landscape(a, started, &args),
        Command::Breakdown(a) => cmd_breakdown(a, started, &args),
        Command::Background(a) => cmd_background(a, started, &args),
        Command::Inpaint(a) => cmd_inpaint(a, started, &args),
    };
    if let Err(e) = result {
        eprintln!("acls: {}", e.message);
        std::process::exit(e.code);
    }
}

fn manifest(subcommand: &str, args: &[String], seed: u64, started: Instant) -> RunManifest {
    RunManifest {
        subcommand: subcommand.to_string(),
        args: args.to_vec(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

fn write_text(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// CSV outputs carry their manifest in a sidecar file (or on stderr when
/// streaming to stdout).
fn emit_manifest(out: &Option<PathBuf>, man: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(man).expect("manifest serializes");
    match out {
        Some(path) => {
            let mut side = path.clone().into_os_string();
            side.push(".manifest.json");
            std::fs::write(&side, json + "\n")
                .map_err(|e| CliError::input(format!("manifest sidecar: {e}")))
        }
        None => {
            eprintln!("{json}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- fit

fn read_csv_dataset(
    path: &Path,
    y_name: &Option<String>,
    intercept: bool,
) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::input("csv: empty file"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() {
        return Err(CliError::input("csv: empty header"));
    }
    let y_col = match y_name {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(format!("csv: no column named '{name}'")))?,
        None => header.len() - 1,
    };
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if fields.len() != header.len() {
            return Err(CliError::input(format!(
                "csv line {}: expected {} fields, got {}",
                lineno + 2,
                header.len(),
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(header.len() - 1);
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                CliError::input(format!("csv line {}: bad number '{f}'", lineno + 2))
            })?;
            if j == y_col {
                ys.push(v);
            } else {
                row.push(v);
            }
        }
        xs.push(row);
    }
    if xs.is_empty() {
        return Err(CliError::input("csv: no data rows"));
    }
    let x = Matrix::from_rows(&xs).map_err(input_err)?;
    Dataset::new(x, ys, intercept).map_err(input_err)
}

fn mad_of_ols_residuals(data: &Dataset) -> Result<f64, CliError> {
    let ols = fit_ols(data).map_err(compute_err)?;
    let r = data.residuals(&ols.beta).map_err(compute_err)?;
    let med = median_slice(&mut r.clone());
    let mut dev: Vec<f64> = r.iter().map(|v| (v - med).abs()).collect();
    Ok(1.4826 * median_slice(&mut dev))
}

fn resolve_tau(
    data: &Dataset,
    tau: Option<f64>,
    rule: TauRuleArg,
    mad_c: f64,
) -> Result<LossConfig, CliError> {
    if let Some(t) = tau {
        return LossConfig::explicit(t).map_err(input_err);
    }
    match rule {
        TauRuleArg::SqrtNLoglogN => {
            LossConfig::from_rule(TauRule::SqrtNOverLogLogN, data.n(), None).map_err(input_err)
        }
        TauRuleArg::Mad => {
            let sigma = mad_of_ols_residuals(data)?;
            LossConfig::from_rule(TauRule::MadScaled { c: mad_c }, data.n(), Some(sigma))
                .map_err(input_err)
        }
    }
}

#[derive(Serialize)]
struct FitOutput {
    manifest: RunManifest,
    tau: Option<f64>,
    fit: FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    inference: Option<acls_core::inference::InferenceReport>,
}

fn cmd_fit(a: FitArgs, started: Instant, argv: &[String]) -> Result<(), CliError> {
    let data = read_csv_dataset(&a.csv, &a.y, a.intercept)?;
    let needs_tau = !matches!(a.solver, SolverArg::Ols | SolverArg::Lts) || a.infer;
    let cfg = if needs_tau || a.tau.is_some() {
        Some(resolve_tau(&data, a.tau, a.tau_rule, a.mad_c)?)
    } else {
        None
    };
    let rcfg = RgdConfig {
        restarts: a.restarts,
        seed: a.seed,
        ..RgdConfig::default()
    };
    let xcfg = ExactConfig {
        max_n: a.max_n,
        strategy: a.strategy.into(),
    };
    let fit = match a.solver {
        SolverArg::Exact => fit_exact(&data, cfg.as_ref().unwrap(), &xcfg),
        SolverArg::Rgd => fit_rgd(&data, cfg.as_ref().unwrap(), &rcfg),
        SolverArg::Hybrid => fit_hybrid(
            &data,
            cfg.as_ref().unwrap(),
            &rcfg,
            &xcfg,
            a.subsample_fraction,
            a.subsample_runs,
        ),
        SolverArg::Ols => fit_ols(&data),
        SolverArg::Ahr => fit_ahr(&data, cfg.as_ref().unwrap()),
        SolverArg::Lts => fit_lts(&data, a.h, a.n_subsets, a.seed),
    }
    .map_err(compute_err)?;
    let inference = if a.infer {
        Some(robust_inference(&data, &fit, cfg.as_ref().unwrap()).map_err(compute_err)?)
    } else {
        None
    };
    let out = FitOutput {
        manifest: manifest("fit", argv, a.seed, started),
        tau: cfg.map(|c| c.tau),
        fit,
        inference,
    };
    let json = serde_json::to_string_pretty(&out).expect("fit output serializes");
    write_text(&a.out, &(json + "\n"))
}

// ----------------------------------------------------------- simulate

fn cmd_simulate(a: SimulateArgs, started: Instant, argv: &[String]) -> Result<(), CliError> {
    let estimators: Vec<EstimatorKind> = a
        .estimators
        .iter()
        .map(|s| EstimatorKind::parse(s))
        .collect::<Result<_, _>>()
        .map_err(input_err)?;
    let harness = HarnessConfig {
        rgd: RgdConfig {
            restarts: a.restarts,
            ..RgdConfig::default()
        },
        lts_subsets: a.lts_subsets,
        ..HarnessConfig::default()
    };
    let mut csv = String::from("estimator,scenario,a,median_mse,median_sd,mean_cpu_s\n");
    let mut summaries = Vec::new();
    for (idx, &a_val) in a.a.iter().enumerate() {
        let cfg = ScenarioConfig {
            scenario: a.scenario,
            n: a.n,
            d: a.d,
            lambda: a.lambda,
            a: a_val,
            rho: 0.5,
            seed: derive_seed(a.seed, idx as u64),
        };
        let summary = run_replication(&cfg, &estimators, a.replicates, &harness)
            .map_err(compute_err)?;
        for est in &summary.per_estimator {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                est.estimator.name(),
                summary.scenario,
                summary.a,
                est.median_mse,
                est.median_sd,
                est.mean_cpu_s
            ));
        }
        summaries.push(summary);
    }
    match a.format {
        OutputFormat::Csv => {
            write_text(&a.out, &csv)?;
            emit_manifest(&a.out, &manifest("simulate", argv, a.seed, started))
        }
        OutputFormat::Json => {
            let body = serde_json::json!({
                "manifest": manifest("simulate", argv, a.seed, started),
                "summaries": summaries,
            });
            write_text(&a.out, &(serde_json::to_string_pretty(&body).unwrap() + "\n"))
        }
    }
}

// ---------------------------------------------------------- landscape

fn parse_grid(s: &str) -> Result<(f64, f64, usize), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::input("grid must be lo,hi,steps"));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::input("grid lo: bad number"))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::input("grid hi: bad number"))?;
    let steps: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| CliError::input("grid steps: bad count"))?;
    Ok((lo, hi, steps))
}

fn cmd_landscape(a: LandscapeArgs, started: Instant, argv: &[String]) -> Result<(), CliError> {
    let grid = parse_grid(&a.grid)?;
    let points = landscape_profile(a.case, &a.n_list, grid, a.seed).map_err(|e| match e {
        AclsError::InvalidArgument(_) => input_err(e),
        other => compute_err(other),
    })?;
    match a.format {
        OutputFormat::Csv => {
            let mut csv = String::from("case,n,beta,loss\n");
            for pt in &points {
                csv.push_str(&format!("{},{},{},{}\n", pt.case, pt.n, pt.beta, pt.loss));
            }
            write_text(&a.out, &csv)?;
            emit_manifest(&a.out, &manifest("landscape", argv, a.seed, started))
        }
        OutputFormat::Json => {
            let body = serde_json::json!({
                "manifest": manifest("landscape", argv, a.seed, started),
                "points": points,
            });
            write_text(&a.out, &(serde_json::to_string_pretty(&body).unwrap() + "\n"))
        }
    }
}

// ---------------------------------------------------------- breakdown

fn cmd_breakdown(a: BreakdownArgs, started: Instant, argv: &[String]) -> Result<(), CliError> {
    let estimator = match a.estimator {
        BreakdownArg::Exact => BreakdownEstimator::Exact,
        BreakdownArg::Ahr => BreakdownEstimator::Ahr,
        BreakdownArg::Ols => BreakdownEstimator::Ols,
    };
    let rows = breakdown_probe(a.n, a.d, &a.contam_counts, &a.magnitudes, estimator, a.seed)
        .map_err(compute_err)?;
    let name = match a.estimator {
        BreakdownArg::Exact => "exact",
        BreakdownArg::Ahr => "ahr",
        BreakdownArg::Ols => "ols",
    };
    let mut csv = String::from("estimator,contaminated,magnitude,beta_norm\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            name, r.contaminated, r.magnitude, r.beta_norm
        ));
    }
    write_text(&a.out, &csv)?;
    emit_manifest(&a.out, &manifest("breakdown", argv, a.seed, started))
}

// --------------------------------------------------------- background

fn read_frame_dir(dir: &Path) -> Result<(Matrix, usize, usize), CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "pgm").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::input(format!(
            "{}: no .pgm frames found",
            dir.display()
        )));
    }
    let first = read_pgm(&paths[0]).map_err(input_err)?;
    let (h, w) = (first.rows(), first.cols());
    let mut y = Matrix::zeros(paths.len(), h * w);
    y.row_mut(0).copy_from_slice(first.data());
    for (i, p) in paths.iter().enumerate().skip(1) {
        let img = read_pgm(p).map_err(input_err)?;
        if img.rows() != h || img.cols() != w {
            return Err(CliError::input(format!(
                "{}: frame size {}x{} differs from {}x{}",
                p.display(),
                img.rows(),
                img.cols(),
                h,
                w
            )));
        }
        y.row_mut(i).copy_from_slice(img.data());
    }
    Ok((y, h, w))
}

#[derive(Serialize)]
struct BackgroundMetrics {
    manifest: RunManifest,
    frames: usize,
    frame_height: usize,
    frame_width: usize,
    q: usize,
    tau: f64,
    sigma_hat: Option<f64>,
    objective: f64,
    sweeps: usize,
    flagged_frames: usize,
}

fn cmd_background(a: BackgroundArgs, started: Instant, argv: &[String]) -> Result<(), CliError> {
    let (y, h, w) = read_frame_dir(&a.frames)?;
    let n = y.rows();
    let (tau, sigma_hat) = match a.tau {
        Some(t) => (LossConfig::explicit(t).map_err(input_err)?.tau, None),
        None => {
            let sigma = mad_sigma(&y).map_err(compute_err)?;
            let cfg = LossConfig::from_rule(
                TauRule::MadScaled { c: a.tau_scale },
                n,
                Some(sigma),
            )
            .map_err(compute_err)?;
            (cfg.tau, Some(sigma))
        }
    };
    let model = match a.method {
        BackgroundMethod::Acls => {
            fit_subspace_acls(&y, a.q, tau, a.eps_opt, a.max_sweeps).map_err(compute_err)?
        }
        BackgroundMethod::Ols => fit_subspace_ols(&y, a.q).map_err(compute_err)?,
    };
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::input(format!("{}: {e}", a.out_dir.display())))?;
    for i in 0..n {
        let bg = model.background(i);
        let fg = model.foreground(&y, i);
        let bg_img = Matrix::from_row_major(h, w, bg).map_err(compute_err)?;
        let fg_img =
            Matrix::from_row_major(h, w, fg.iter().map(|v| v.abs()).collect()).map_err(compute_err)?;
        write_pgm(&a.out_dir.join(format!("bg_{i:04}.pgm")), &bg_img).map_err(input_err)?;
        write_pgm(&a.out_dir.join(format!("fg_{i:04}.pgm")), &fg_img).map_err(input_err)?;
    }
    container::write_matrix(
        &a.out_dir.join("model_m.bin"),
        &Matrix::from_row_major(1, model.m.len(), model.m.clone()).map_err(compute_err)?,
    )
    .map_err(input_err)?;
    container::write_matrix(&a.out_dir.join("model_u.bin"), &model.u).map_err(input_err)?;
    container::write_matrix(&a.out_dir.join("model_s.bin"), &model.s).map_err(input_err)?;
    let delta_row: Vec<f64> = model.delta.iter().map(|&d| f64::from(u8::from(d))).collect();
    container::write_matrix(
        &a.out_dir.join("model_delta.bin"),
        &Matrix::from_row_major(1, delta_row.len(), delta_row).map_err(compute_err)?,
    )
    .map_err(input_err)?;
    let flagged = model.delta.iter().filter(|&&d| d).count();
    let metrics = BackgroundMetrics {
        manifest: manifest("background", argv, a.seed, started),
        frames: n,
        frame_height: h,
        frame_width: w,
        q: a.q,
        tau,
        sigma_hat,
        objective: model.objective,
        sweeps: model.sweeps,
        flagged_frames: flagged,
    };
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    std::fs::write(a.out_dir.join("metrics.json"), json.clone() + "\n")
        .map_err(|e| CliError::input(format!("metrics.json: {e}")))?;
    println!("{json}");
    Ok(())
}

// ------------------------------------------------------------ inpaint

fn load_dictionary(path: &Path, n: usize) -> Result<Dictionary, CliError> {
    let matrix = if path.extension().map(|e| e == "csv").unwrap_or(false) {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|_| {
                CliError::input(format!("{}: bad number on line {}", path.display(), lineno + 1))
            })?);
        }
        Matrix::from_rows(&rows).map_err(input_err)?
    } else {
        container::read_matrix(path).map_err(input_err)?
    };
    if matrix.rows() != n {
        return Err(CliError::input(format!(
            "dictionary rows {} do not match patch pixel count {n}",
            matrix.rows()
        )));
    }
    Dictionary::new(matrix).map_err(input_err)
}

#[derive(Serialize)]
struct InpaintMetrics {
    manifest: RunManifest,
    patch: usize,
    stride: usize,
    atoms: usize,
    lambda: f64,
    tau: f64,
    sigma_hat: f64,
    rounds: usize,
    converged: bool,
    cycled: bool,
    mask_density: f64,
    /// PSNR in dB against --reference; null when infinite (identical) or no
    /// reference given.
    psnr_restored_db: Option<f64>,
    psnr_input_db: Option<f64>,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn cmd_inpaint(a: InpaintArgs, started: Instant, argv: &[String]) -> Result<(), CliError> {
    let image = read_pgm(&a.image).map_err(input_err)?;
    let (patches, geom) = patchify(&image, a.patch, a.stride).map_err(input_err)?;
    let n = a.patch * a.patch;
    let dict = match &a.dict {
        Some(path) => load_dictionary(path, n)?,
        None => dct_dictionary(n, a.dct_atoms).map_err(input_err)?,
    };

    // Per-patch median centering: the sparse code then models deviations,
    // which is the scale the MAD-based tau lives on.
    let p = patches.cols();
    let mut centered = patches.clone();
    let mut medians = vec![0.0; p];
    for i in 0..p {
        let mut col = patches.col(i);
        let med = median_slice(&mut col);
        medians[i] = med;
        for r in 0..n {
            centered[(r, i)] -= med;
        }
    }
    let sigma_hat = mad_sigma(&patches.transpose()).map_err(compute_err)?;
    // The rule's sample size is the per-patch pixel count: every column is
    // its own n-observation coding problem.
    let tau = match a.tau {
        Some(t) => LossConfig::explicit(t).map_err(input_err)?.tau,
        None => LossConfig::from_rule(TauRule::MadScaled { c: a.tau_scale }, n, Some(sigma_hat))
            .map_err(compute_err)?
            .tau,
    };

    let result = fit_inpaint(&centered, &dict, a.lambda, tau, a.max_rounds).map_err(compute_err)?;
    let mut restored_patches = result.restored.clone();
    for i in 0..p {
        for r in 0..n {
            restored_patches[(r, i)] += medians[i];
        }
    }
    let restored = reassemble(&restored_patches, &geom).map_err(compute_err)?;
    write_pgm(&a.out, &restored).map_err(input_err)?;

    let flagged: usize = result.mask.iter().flatten().filter(|&&f| f).count();
    let (psnr_restored_db, psnr_input_db) = match &a.reference {
        Some(path) => {
            let reference = read_pgm(path).map_err(input_err)?;
            let scale = |m: &Matrix| {
                Matrix::from_row_major(
                    m.rows(),
                    m.cols(),
                    m.data().iter().map(|v| v * 255.0).collect(),
                )
                .unwrap()
            };
            let pr = psnr(&scale(&restored), &scale(&reference), 255.0).map_err(input_err)?;
            let pi = psnr(&scale(&image), &scale(&reference), 255.0).map_err(input_err)?;
            (finite_or_none(pr), finite_or_none(pi))
        }
        None => (None, None),
    };
    let metrics = InpaintMetrics {
        manifest: manifest("inpaint", argv, a.seed, started),
        patch: a.patch,
        stride: a.stride,
        atoms: dict.atoms(),
        lambda: a.lambda,
        tau,
        sigma_hat,
        rounds: result.rounds,
        converged: result.converged,
        cycled: result.cycled,
        mask_density: flagged as f64 / (result.mask.len() * result.mask[0].len()) as f64,
        psnr_restored_db,
        psnr_input_db,
    };
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    // The restored image carries its metrics (and manifest) in a sidecar.
    let mut side = a.out.clone().into_os_string();
    side.push(".metrics.json");
    std::fs::write(&side, json.clone() + "\n")
        .map_err(|e| CliError::input(format!("metrics sidecar: {e}")))?;
    println!("{json}");
    Ok(())
}
