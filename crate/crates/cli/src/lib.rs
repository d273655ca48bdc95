//! Command-line front end: configuration, dispatch, and file emitters.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use prorata_core::backtest::{efficient_frontier, report_from_records, simulate_paths, StrategyStats};
use prorata_core::liquidation::{extract_trading_curve, LiquidationSolver};
use prorata_core::sim::{RNG_ALGORITHM, RNG_STREAMS};
use prorata_core::{refine_and_compare, GridSpec, PolicyTable, QviSolver, RefinementReport, Window};
use serde::Serialize;

use crate::config::{RunConfig, Settings};
use crate::output::{json_bytes, write_atomic, GridMeta};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error(transparent)]
    Core(#[from] prorata_core::Error),
    #[error("{}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for anything the user can fix in the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(prorata_core::Error::NonFinite { .. }) => 2,
            CliError::Io { .. } | CliError::Runtime(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "prorata", about = "Market making and liquidation in a one-tick pro-rata order book", version)]
pub struct Cli {
    /// Flat key-value configuration file; missing keys take default values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed for the simulator (overrides the `seed` key).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of simulated paths (overrides the `n_mc` key).
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the market-making problem: value.csv, policy.csv, grid.json.
    Solve,
    /// Solve the liquidation problem: value_liq.csv, policy_liq.csv, trading_curve.csv.
    SolveLiq,
    /// Backtest a policy against the constant-quote benchmark: stats.json, histogram.csv.
    Backtest {
        /// Directory written by `solve`; solved in memory when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Also write the first N paths of both strategies to paths.csv.
        #[arg(long, value_name = "N")]
        dump_paths: Option<usize>,
    },
    /// Sweep the risk aversion: frontier.csv.
    Frontier {
        /// Comma-separated risk aversions (overrides the `gammas` key).
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
    /// Grid refinement study: refine.json.
    Refine {
        /// Refinement factor in time and inventory.
        #[arg(long, default_value_t = 2)]
        factor: usize,
        /// Number of successive refinements.
        #[arg(long, default_value_t = 2)]
        levels: usize,
        /// Compare only nodes with |y| <= this inventory.
        #[arg(long)]
        y_window: Option<f64>,
    },
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be >= 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let config = RunConfig::load(cli.config.as_deref())?.with_seed(cli.seed).with_paths(cli.paths)?;
    let log = |msg: &str| {
        if cli.verbose {
            eprintln!("{msg}");
        }
    };
    pool.install(|| match &cli.command {
        Command::Solve => solve(&config, &cli.out, &log),
        Command::SolveLiq => solve_liq(&config, &cli.out, &log),
        Command::Backtest { policy, dump_paths } => backtest(&config, &cli.out, policy.as_deref(), *dump_paths, &log),
        Command::Frontier { gammas } => frontier(&config, &cli.out, gammas.as_deref(), &log),
        Command::Refine { factor, levels, y_window } => refine(&config, &cli.out, *factor, *levels, *y_window, &log),
    })
}

#[derive(Serialize)]
struct Solved<'a> {
    grid: &'a GridMeta,
    config: &'a Settings,
}

fn solve_policy(config: &RunConfig) -> Result<(prorata_core::ValueSurface, PolicyTable, GridMeta), CliError> {
    let solver = QviSolver::new(&config.params, &config.grid)?;
    let (surface, policy) = solver.solve()?;
    let meta = GridMeta {
        h: surface.time_step(),
        dy: surface.dy(),
        n_t: surface.n_t(),
        n_y: surface.n_y(),
        trends: surface.trends().to_vec(),
        impulse_threshold: solver.impulse_threshold(),
    };
    Ok((surface, policy, meta))
}

fn solve(config: &RunConfig, out: &Path, log: &dyn Fn(&str)) -> Result<(), CliError> {
    log("solving the market-making problem");
    let (surface, policy, meta) = solve_policy(config)?;
    write_atomic(out, "value.csv", &output::value_csv(&surface))?;
    write_atomic(out, "policy.csv", &output::policy_csv(&policy))?;
    write_atomic(out, "grid.json", &json_bytes(&meta))?;
    write_atomic(out, "solve.json", &json_bytes(&Solved { grid: &meta, config: &config.settings }))?;
    log(&format!("w(0, 0) on trend node 0 = {}", surface.value(0, 0, 0)));
    Ok(())
}

fn solve_liq(config: &RunConfig, out: &Path, log: &dyn Fn(&str)) -> Result<(), CliError> {
    log("solving the liquidation problem");
    let solver = LiquidationSolver::new(&config.params, &config.grid)?;
    let (surface, policy) = solver.solve()?;
    let curve = extract_trading_curve(&policy);
    write_atomic(out, "value_liq.csv", &output::liquidation_value_csv(&surface))?;
    write_atomic(out, "policy_liq.csv", &output::liquidation_policy_csv(&policy))?;
    write_atomic(out, "trading_curve.csv", &output::trading_curve_csv(&curve))?;
    let meta = GridMeta {
        h: surface.time_step(),
        dy: surface.dy(),
        n_t: surface.n_t(),
        n_y: surface.n_y(),
        trends: vec![config.params.trend],
        impulse_threshold: solver.impulse_threshold(),
    };
    write_atomic(out, "solve_liq.json", &json_bytes(&Solved { grid: &meta, config: &config.settings }))?;
    Ok(())
}

#[derive(Serialize)]
struct RngInfo {
    algorithm: &'static str,
    streams: &'static str,
    seed: u64,
}

#[derive(Serialize)]
struct BacktestOutput<'a> {
    n_paths: usize,
    optimal: &'a StrategyStats,
    benchmark: &'a StrategyStats,
    rng: RngInfo,
    policy_source: String,
    config: &'a Settings,
}

fn backtest(
    config: &RunConfig,
    out: &Path,
    policy_dir: Option<&Path>,
    dump: Option<usize>,
    log: &dyn Fn(&str),
) -> Result<(), CliError> {
    let (policy, source) = match policy_dir {
        Some(dir) => (output::read_policy(dir)?, dir.display().to_string()),
        None => {
            log("solving the market-making problem");
            (solve_policy(config)?.1, "solved in memory".to_string())
        }
    };
    log(&format!("simulating {} paths", config.sim.n_paths));
    let records = simulate_paths(&config.params, &config.grid, &config.sim, &policy, dump.is_some())?;
    let report = report_from_records(&records)?;
    let stats = BacktestOutput {
        n_paths: config.sim.n_paths,
        optimal: &report.optimal,
        benchmark: &report.benchmark,
        rng: RngInfo { algorithm: RNG_ALGORITHM, streams: RNG_STREAMS, seed: config.sim.seed },
        policy_source: source,
        config: &config.settings,
    };
    write_atomic(out, "stats.json", &json_bytes(&stats))?;
    write_atomic(out, "histogram.csv", &output::histogram_csv(&report.histogram))?;
    if let Some(n) = dump {
        let mut w = csv::Writer::from_writer(Vec::new());
        let row_err = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(["path", "strategy", "t", "P", "varpi", "X", "Y"]).map_err(row_err)?;
        for (path, pair) in records.iter().enumerate().take(n) {
            for (name, rec) in [("optimal", &pair.0), ("benchmark", &pair.1)] {
                for p in rec.series.iter().flatten() {
                    w.write_record([
                        path.to_string(),
                        name.to_string(),
                        p.t.to_string(),
                        output::fmt(p.price),
                        output::fmt(p.varpi),
                        output::fmt(p.cash),
                        output::fmt(p.inventory),
                    ])
                    .map_err(row_err)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        write_atomic(out, "paths.csv", &bytes)?;
    }
    log(&format!("info ratio: optimal {:?}, benchmark {:?}", report.optimal.info_ratio, report.benchmark.info_ratio));
    Ok(())
}

fn frontier(config: &RunConfig, out: &Path, gammas: Option<&[f64]>, log: &dyn Fn(&str)) -> Result<(), CliError> {
    let gammas = gammas.unwrap_or(&config.settings.gammas);
    if gammas.is_empty() {
        return Err(CliError::Usage("no risk aversion values given".into()));
    }
    log(&format!("sweeping {} risk aversion values", gammas.len()));
    let result = efficient_frontier(&config.params, &config.grid, &config.sim, gammas);
    for (gamma, reason) in &result.failures {
        eprintln!("warning: gamma = {gamma} skipped: {reason}");
    }
    if result.rows.is_empty() {
        return Err(CliError::Runtime("every risk aversion value failed".into()));
    }
    write_atomic(out, "frontier.csv", &output::frontier_csv(&result))?;
    Ok(())
}

#[derive(Serialize)]
struct RefineOutput<'a> {
    reports: &'a [RefinementReport],
    /// Whether successive differences at the origin shrink.
    origin_diffs_shrink: bool,
    config: &'a Settings,
}

fn refine(
    config: &RunConfig,
    out: &Path,
    factor: usize,
    levels: usize,
    y_window: Option<f64>,
    log: &dyn Fn(&str),
) -> Result<(), CliError> {
    if levels == 0 {
        return Err(CliError::Usage("--levels must be >= 1".into()));
    }
    let window = match y_window {
        Some(y) => Window { y_min: -y, y_max: y, ..Window::everywhere() },
        None => Window::everywhere(),
    };
    let mut grid: GridSpec = config.grid.clone();
    let mut reports = Vec::new();
    for level in 0..levels {
        log(&format!("refinement level {}", level + 1));
        reports.push(refine_and_compare(&config.params, &grid, factor, window)?);
        grid = grid.refined(factor);
    }
    let shrink = reports.windows(2).all(|w| w[1].diff_at_origin < w[0].diff_at_origin);
    write_atomic(
        out,
        "refine.json",
        &json_bytes(&RefineOutput { reports: &reports, origin_diffs_shrink: shrink, config: &config.settings }),
    )?;
    Ok(())
}
