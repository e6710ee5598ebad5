//! Command-line interface: path simulation, projection fitting, Monte-Carlo
//! experiments and the price/volatility estimation pipelines.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fracdrift::apps;
use fracdrift::basis::BasisFamily;
use fracdrift::estimator::{self, PenaltyConfig};
use fracdrift::fracops::{self, TransformGrid};
use fracdrift::simulate::{self, BlackScholesModel, FracStochVolModel, MartingaleModel, RngStream};
use fracdrift::{Ensemble, QuadVarModel, SamplePath, TimeGrid};
use fracdrift_cli::config::{parse_dims, DriftSpec, ExperimentConfig};
use fracdrift_cli::io::{format_float, read_series, write_csv};
use fracdrift_cli::report::{emit_outputs, probe_writable};
use fracdrift_cli::{experiment, CliError, CliResult};

#[derive(Parser)]
#[command(name = "fracdrift", version, about = "Martingale-driven model simulation and nonparametric drift estimation")]
struct Cli {
    /// Master seed for all randomness.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = "fracdrift-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sample paths and export them as CSV (columns t, value...).
    Simulate(SimulateArgs),
    /// Fit the projection estimator to an ensemble CSV (columns t, z_1..z_N).
    Fit(FitArgs),
    /// Run a configured Monte-Carlo experiment and emit report files.
    Experiment(ExperimentArgs),
    /// Estimate the drift of a price series in the geometric model.
    Bs(BsArgs),
    /// Estimate the volatility drift in the stochastic-volatility model.
    Fsv(FsvArgs),
    /// Estimate the constant volatility of a price series.
    Sigma(SigmaArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimScenario {
    /// Molchan martingale paths.
    Molchan,
    /// Observation process with drift.
    Observation,
    /// Fractional Brownian motion.
    Fbm,
    /// Geometric price path.
    Bs,
    /// Stochastic-volatility pair (price and volatility files).
    Fsv,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: SimScenario,
    #[arg(long, default_value_t = 0.6)]
    hurst: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    copies: usize,
    #[arg(long, default_value = "zero")]
    drift: String,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long, default_value_t = 10.0)]
    s0: f64,
    #[arg(long, default_value_t = 0.3)]
    upsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma0: f64,
}

#[derive(Args)]
struct FitArgs {
    /// Ensemble CSV: time column plus one column per copy.
    #[arg(long)]
    input: PathBuf,
    /// Hurst index of the driving martingale (omit for Brownian).
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long, default_value = "2..12")]
    dims: String,
    /// `slope` or `fixed:<c>`.
    #[arg(long, default_value = "slope")]
    penalty: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration overrides, `key=value`.
    #[arg(long = "set")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct BsArgs {
    /// Price series CSV (columns t, value) spanning `copies` blocks.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long)]
    copies: usize,
    #[arg(long)]
    sigma: Option<f64>,
    /// Estimate the volatility from the series instead of passing it.
    #[arg(long, default_value_t = false)]
    estimate_sigma: bool,
    #[arg(long, default_value = "2..12")]
    dims: String,
    #[arg(long, default_value = "slope")]
    penalty: String,
}

#[derive(Args)]
struct FsvArgs {
    /// Volatility series CSV (columns t, value) spanning `copies` blocks
    /// separated by `gap`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long)]
    copies: usize,
    #[arg(long)]
    upsilon: f64,
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value_t = 5.0)]
    gap: f64,
    #[arg(long, default_value = "2..12")]
    dims: String,
    #[arg(long, default_value = "slope")]
    penalty: String,
}

#[derive(Args)]
struct SigmaArgs {
    /// Price series CSV (columns t, value).
    #[arg(long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Experiment(args) => cmd_experiment(cli, args),
        Command::Bs(args) => cmd_bs(cli, args),
        Command::Fsv(args) => cmd_fsv(cli, args),
        Command::Sigma(args) => cmd_sigma(args),
    }
}

fn ensure_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    probe_writable(dir)
}

fn path_header(copies: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    if copies == 1 {
        header.push("value".to_string());
    } else {
        for i in 1..=copies {
            header.push(format!("value_{i}"));
        }
    }
    header
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<()> {
    ensure_out(&cli.out)?;
    let grid = TimeGrid::new(args.horizon, args.steps)?;
    let streams = RngStream::new(cli.seed);
    let drift = DriftSpec::parse(&args.drift)?;
    let times: Vec<f64> = grid.nodes().collect();
    let mut columns = vec![times];
    let mut vol_columns = Vec::new();
    for i in 0..args.copies {
        let mut rng = streams.stream(i as u64);
        match args.scenario {
            SimScenario::Molchan => {
                let p = simulate::simulate_molchan(grid, args.hurst, &mut rng)?;
                columns.push(p.values().to_vec());
            }
            SimScenario::Observation => {
                let model = MartingaleModel {
                    drift: drift.as_fn(),
                    qv: QuadVarModel::molchan(args.hurst)?,
                };
                let p = simulate::simulate_z(&model, grid, &mut rng)?;
                columns.push(p.values().to_vec());
            }
            SimScenario::Fbm => {
                let p = if args.steps <= 2048 {
                    simulate::simulate_fbm(grid, args.hurst, &mut rng)?
                } else {
                    simulate::simulate_fbm_circulant(grid, args.hurst, &mut rng)?
                };
                columns.push(p.values().to_vec());
            }
            SimScenario::Bs => {
                let model = BlackScholesModel { s0: args.s0, sigma: args.sigma, drift: drift.as_fn() };
                let p = simulate::simulate_black_scholes(&model, grid, &mut rng)?;
                columns.push(p.values().to_vec());
            }
            SimScenario::Fsv => {
                let model = FracStochVolModel {
                    s0: args.s0,
                    sigma0: args.sigma0,
                    upsilon: args.upsilon,
                    hurst: args.hurst,
                    price_drift: drift.as_fn(),
                    vol_drift: std::sync::Arc::new(|_| 0.0),
                    gap: 0.0,
                };
                let p = simulate::simulate_fsv(&model, grid, &mut rng)?;
                columns.push(p.price.values().to_vec());
                vol_columns.push(p.volatility.values().to_vec());
            }
        }
    }
    let header = path_header(args.copies);
    write_csv(&cli.out.join("paths.csv"), &header, &columns)?;
    if !vol_columns.is_empty() {
        let mut cols = vec![columns[0].clone()];
        cols.extend(vol_columns);
        write_csv(&cli.out.join("volatility.csv"), &header, &cols)?;
    }
    println!("wrote {}", cli.out.join("paths.csv").display());
    Ok(())
}

/// Rebuild a uniform grid from a CSV time column.
fn grid_from_times(times: &[f64]) -> CliResult<TimeGrid> {
    if times.len() < 2 {
        return Err(CliError::Config("need at least two observation times".into()));
    }
    let horizon = *times.last().unwrap();
    let n = times.len() - 1;
    let grid = TimeGrid::new(horizon, n)?;
    for (l, t) in times.iter().enumerate() {
        if (t - grid.node(l)).abs() > 1e-9 * horizon.max(1.0) {
            return Err(CliError::Config(format!(
                "observation times are not a uniform dissection starting at 0 (node {l}: {t})"
            )));
        }
    }
    Ok(grid)
}

fn parse_penalty(text: &str) -> CliResult<PenaltyConfig> {
    if text == "slope" {
        return Ok(PenaltyConfig::slope_heuristic());
    }
    if let Some(c) = text.strip_prefix("fixed:") {
        let c: f64 = c
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad penalty constant {c:?}")))?;
        return PenaltyConfig::fixed(c).map_err(|e| CliError::Config(e.to_string()));
    }
    Err(CliError::Config(format!("unknown penalty {text:?}; expected slope or fixed:<c>")))
}

fn write_fit_outputs(
    out: &Path,
    fit: &estimator::FitResult,
    family: &BasisFamily,
    scale: f64,
    curve_name: &str,
    lower: f64,
) -> CliResult<()> {
    let json = serde_json::to_string_pretty(fit)
        .map_err(|e| CliError::Io(format!("fit serialization: {e}")))?;
    std::fs::write(out.join("fit.json"), json)?;
    let horizon = family.horizon();
    let times: Vec<f64> =
        (0..500).map(|k| lower + (horizon - lower) * k as f64 / 499.0).collect();
    let values: Vec<f64> = times.iter().map(|t| scale * fit.eval(family, *t)).collect();
    write_csv(
        &out.join(curve_name),
        &["t".to_string(), "value".to_string()],
        &[times, values],
    )?;
    Ok(())
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> CliResult<()> {
    ensure_out(&cli.out)?;
    let (times, series) = read_series(&args.input)?;
    let grid = grid_from_times(&times)?;
    let paths: Result<Vec<SamplePath>, _> =
        series.into_iter().map(|v| SamplePath::new(grid, v)).collect();
    let ensemble = Ensemble::new(paths?)?;
    let qv = match args.hurst {
        Some(h) => QuadVarModel::molchan(h)?,
        None => QuadVarModel::Lebesgue,
    };
    let dims = parse_dims(&args.dims)?;
    let penalty = parse_penalty(&args.penalty)?;
    let m_max = *dims.iter().max().unwrap();
    let family = BasisFamily::trigonometric(grid.horizon(), m_max)?;
    let fit = estimator::select_model(&ensemble, &family, &dims, &qv, &penalty)?;
    println!(
        "selected dimension {} (penalty constant {})",
        fit.dim,
        format_float(fit.penalty_constant.unwrap_or(f64::NAN))
    );
    write_fit_outputs(&cli.out, &fit, &family, 1.0, "fhat.csv", grid.first_observation())
}

fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> CliResult<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = cli.seed;
    cfg.apply_overrides(&args.overrides)?;
    if cli.out != Path::new("fracdrift-out") {
        cfg.output_dir = cli.out.clone();
    }
    ensure_out(&cfg.output_dir)?;
    let report = experiment::run_experiment(&cfg)?;
    emit_outputs(&report, &cfg.output_dir)?;
    let agg = report.aggregates();
    println!(
        "{} repetitions in {:.1}s: mean MISE (d<M>) = {}, mean MISE (dt) = {}, mean dim = {}",
        report.rows.len(),
        report.wall_clock.as_secs_f64(),
        format_float(agg.mean_mise_qv),
        format_float(agg.mean_mise_l2),
        agg.mean_m_hat,
    );
    if report.is_partial() {
        eprintln!("warning: {} repetitions failed; report marked partial", report.failures.len());
    }
    Ok(())
}

fn cmd_bs(cli: &Cli, args: &BsArgs) -> CliResult<()> {
    ensure_out(&cli.out)?;
    let (times, series) = read_series(&args.input)?;
    let grid = grid_from_times(&times)?;
    let path = SamplePath::new(grid, series[0].clone())?;
    let sigma = if args.estimate_sigma {
        let s = apps::estimate_sigma(&path)?;
        println!("estimated volatility: {}", format_float(s));
        s
    } else {
        args.sigma
            .ok_or_else(|| CliError::Config("pass --sigma or --estimate-sigma".into()))?
    };
    let copies = apps::segment_series(&path, args.horizon, 0.0, args.copies)?.copies;
    let z = apps::bs_build_z(&copies, sigma)?;
    let dims = parse_dims(&args.dims)?;
    let penalty = parse_penalty(&args.penalty)?;
    let family = BasisFamily::trigonometric(args.horizon, *dims.iter().max().unwrap())?;
    let estimate = apps::estimate_drift_bs(&z, &family, &dims, sigma, &penalty)?;
    println!("selected dimension {}", estimate.fit.dim);
    write_fit_outputs(
        &cli.out,
        &estimate.fit,
        &family,
        estimate.scale,
        "bhat.csv",
        copies.grid().first_observation(),
    )
}

fn cmd_fsv(cli: &Cli, args: &FsvArgs) -> CliResult<()> {
    ensure_out(&cli.out)?;
    let (times, series) = read_series(&args.input)?;
    let grid = grid_from_times(&times)?;
    let path = SamplePath::new(grid, series[0].clone())?;
    let copies = apps::segment_series(&path, args.horizon, args.gap, args.copies)?.copies;
    let z = apps::fsv_build_z(&copies, args.upsilon, args.hurst, 1)?;
    let dims = parse_dims(&args.dims)?;
    let penalty = parse_penalty(&args.penalty)?;
    let family = BasisFamily::trigonometric(args.horizon, *dims.iter().max().unwrap())?;
    let out_times = fracops::default_output_times(args.horizon);
    let (rho_hat, fit) = apps::estimate_rho(
        &z,
        &family,
        &dims,
        args.upsilon,
        args.hurst,
        &penalty,
        &TransformGrid::default(),
        &out_times,
    )?;
    println!("selected dimension {}", fit.dim);
    let json = serde_json::to_string_pretty(&fit)
        .map_err(|e| CliError::Io(format!("fit serialization: {e}")))?;
    std::fs::write(cli.out.join("fit.json"), json)?;
    write_csv(
        &cli.out.join("rhohat.csv"),
        &["t".to_string(), "value".to_string()],
        &[rho_hat.times().to_vec(), rho_hat.values().to_vec()],
    )?;
    Ok(())
}

fn cmd_sigma(args: &SigmaArgs) -> CliResult<()> {
    let (times, series) = read_series(&args.input)?;
    let grid = grid_from_times(&times)?;
    let path = SamplePath::new(grid, series[0].clone())?;
    println!("{}", format_float(apps::estimate_sigma(&path)?));
    Ok(())
}
