//! Backtest statistics and the risk-aversion sweep.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::MarketParams;
use crate::qvi::backward_solve;
use crate::sim::{check_policy, run_strategy, PathInputs, PathRecord, SimConfig, Strategy};
use crate::surface::PolicyTable;

/// Sample moments of a finite sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    /// Standard deviation with the `n - 1` denominator.
    pub std_dev: f64,
    /// `m3 / m2^1.5` from central population moments; `None` for a flat sample.
    pub skewness: Option<f64>,
    /// Non-excess kurtosis `m4 / m2^2`; `None` for a flat sample.
    pub kurtosis: Option<f64>,
}

impl Moments {
    pub fn of(sample: &[f64]) -> Result<Moments> {
        if sample.len() < 2 {
            return Err(Error::invalid("n_mc", format!("need at least 2 samples, got {}", sample.len())));
        }
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in sample {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let std_dev = (m2 / (n - 1.0)).sqrt();
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        let flat = m2 == 0.0;
        Ok(Moments {
            mean,
            std_dev,
            skewness: (!flat).then(|| m3 / m2.powf(1.5)),
            kurtosis: (!flat).then(|| m4 / (m2 * m2)),
        })
    }
}

/// Performance and activity statistics of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyStats {
    pub n_paths: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub info_ratio: Option<f64>,
    pub profit_per_trade: Option<f64>,
    pub risk_per_trade: Option<f64>,
    pub mean_total_volume: f64,
    pub mean_market_volume: f64,
    pub market_ratio: Option<f64>,
    /// Names of metrics left undefined by a degenerate sample.
    pub flags: Vec<String>,
}

impl StrategyStats {
    /// Derived columns from the aggregate moments and mean volumes.
    pub fn from_aggregates(n_paths: usize, wealth: Moments, mean_total_volume: f64, mean_market_volume: f64) -> Self {
        let mut flags = Vec::new();
        let info_ratio = if wealth.std_dev > 0.0 {
            Some(wealth.mean / wealth.std_dev)
        } else {
            flags.push("info_ratio".to_string());
            None
        };
        if wealth.skewness.is_none() {
            flags.push("skewness".to_string());
            flags.push("kurtosis".to_string());
        }
        let per_trade = mean_total_volume > 0.0;
        if !per_trade {
            flags.extend(["profit_per_trade", "risk_per_trade", "market_ratio"].map(String::from));
        }
        StrategyStats {
            n_paths,
            mean: wealth.mean,
            std_dev: wealth.std_dev,
            skewness: wealth.skewness,
            kurtosis: wealth.kurtosis,
            info_ratio,
            profit_per_trade: per_trade.then(|| wealth.mean / mean_total_volume),
            risk_per_trade: per_trade.then(|| wealth.std_dev / mean_total_volume),
            mean_total_volume,
            mean_market_volume,
            market_ratio: per_trade.then(|| mean_market_volume / mean_total_volume),
            flags,
        }
    }
}

pub fn compute_metrics(records: &[PathRecord]) -> Result<StrategyStats> {
    let wealth: Vec<f64> = records.iter().map(|r| r.terminal_wealth).collect();
    let moments = Moments::of(&wealth)?;
    if !moments.mean.is_finite() || !moments.std_dev.is_finite() {
        let pos = wealth.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite { index: pos as i64, value: wealth[pos] });
    }
    let n = records.len() as f64;
    let total = records.iter().map(|r| r.total_volume).sum::<f64>() / n;
    let market = records.iter().map(|r| r.market_volume).sum::<f64>() / n;
    Ok(StrategyStats::from_aggregates(records.len(), moments, total, market))
}

/// Equal-width histogram of terminal wealth for both strategies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub optimal: Vec<u64>,
    pub benchmark: Vec<u64>,
}

pub const HISTOGRAM_BINS: usize = 100;

impl Histogram {
    /// Bins span the pooled range of both samples; the last bin is closed.
    pub fn pooled(optimal: &[f64], benchmark: &[f64], bins: usize) -> Histogram {
        let all = optimal.iter().chain(benchmark);
        let mut lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let mut hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            (lo, hi) = (0.0, 0.0);
        }
        if lo == hi {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
        let count = |sample: &[f64]| {
            let mut counts = vec![0u64; bins];
            for &v in sample {
                let b = (((v - lo) / width).floor() as usize).min(bins - 1);
                counts[b] += 1;
            }
            counts
        };
        Histogram { edges, optimal: count(optimal), benchmark: count(benchmark) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub optimal: StrategyStats,
    pub benchmark: StrategyStats,
    pub histogram: Histogram,
}

/// Record pairs `(optimal, benchmark)` per path, in path order.
pub fn simulate_paths(
    params: &MarketParams,
    grid: &GridSpec,
    sim: &SimConfig,
    policy: &PolicyTable,
    record_series: bool,
) -> Result<Vec<(PathRecord, PathRecord)>> {
    sim.validate(params)?;
    check_policy(policy, params.horizon, required_trend(grid, sim))?;
    Ok((0..sim.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let inputs = PathInputs::generate(params, sim, path);
            let optimal = run_strategy(Strategy::Optimal(policy), &inputs, params, sim, record_series);
            let benchmark = run_strategy(Strategy::Benchmark, &inputs, params, sim, record_series);
            (optimal, benchmark)
        })
        .collect())
}

/// Trend range the policy must serve: none for a deterministic flat trend.
fn required_trend(grid: &GridSpec, sim: &SimConfig) -> f64 {
    if sim.sigma == 0.0 && sim.varpi0 == 0.0 {
        0.0
    } else {
        grid.c_max
    }
}

pub fn report_from_records(pairs: &[(PathRecord, PathRecord)]) -> Result<BacktestReport> {
    let (opt, bench): (Vec<PathRecord>, Vec<PathRecord>) = pairs.iter().cloned().unzip();
    let optimal = compute_metrics(&opt)?;
    let benchmark = compute_metrics(&bench)?;
    let wo: Vec<f64> = opt.iter().map(|r| r.terminal_wealth).collect();
    let wb: Vec<f64> = bench.iter().map(|r| r.terminal_wealth).collect();
    Ok(BacktestReport { optimal, benchmark, histogram: Histogram::pooled(&wo, &wb, HISTOGRAM_BINS) })
}

/// Runs the optimal policy and the benchmark on common paths.
pub fn run_backtest(
    params: &MarketParams,
    grid: &GridSpec,
    sim: &SimConfig,
    policy: &PolicyTable,
) -> Result<BacktestReport> {
    report_from_records(&simulate_paths(params, grid, sim, policy, false)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub gamma: f64,
    pub std_dev: f64,
    pub mean: f64,
    pub market_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    pub rows: Vec<FrontierRow>,
    /// `(gamma, reason)` for every value that could not be evaluated.
    pub failures: Vec<(f64, String)>,
}

/// Default risk aversions for the sweep, from most to least averse.
pub const FRONTIER_GAMMAS: [f64; 11] =
    [6.67e-4, 4.44e-4, 2.96e-4, 1.98e-4, 1.32e-4, 8.78e-5, 5.85e-5, 3.90e-5, 2.60e-5, 1.73e-5, 1.16e-5];

fn frontier_row(params: &MarketParams, grid: &GridSpec, sim: &SimConfig, gamma: f64) -> Result<FrontierRow> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    let params = MarketParams { gamma, ..params.clone() };
    let (_, policy) = backward_solve(&params, grid)?;
    sim.validate(&params)?;
    check_policy(&policy, params.horizon, required_trend(grid, sim))?;
    let records: Vec<PathRecord> = (0..sim.n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let inputs = PathInputs::generate(&params, sim, path);
            run_strategy(Strategy::Optimal(&policy), &inputs, &params, sim, false)
        })
        .collect();
    let stats = compute_metrics(&records)?;
    Ok(FrontierRow { gamma, std_dev: stats.std_dev, mean: stats.mean, market_ratio: stats.market_ratio })
}

/// Re-solves and re-simulates for each `gamma`, on the same paths. Rows keep
/// the input order; failed values are reported and skipped.
pub fn efficient_frontier(params: &MarketParams, grid: &GridSpec, sim: &SimConfig, gammas: &[f64]) -> Frontier {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &gamma in gammas {
        match frontier_row(params, grid, sim, gamma) {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((gamma, e.to_string())),
        }
    }
    Frontier { rows, failures }
}
