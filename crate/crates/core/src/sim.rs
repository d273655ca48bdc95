//! Simulated market for backtests.
//!
//! The mid-price jumps by one tick at the event times of two Cox processes
//! with intensities `pi+ = (K + varpi)/2` and `pi- = (K - varpi)/2`, where
//! the trend `varpi` is an Ornstein-Uhlenbeck process. Executions at the
//! best quotes follow independent compound Poisson processes. Everything is
//! discretized on an Euler grid with at most one event per process per step.
//!
//! Each path draws from two ChaCha8 streams derived from `(seed, path)`, so
//! a path never depends on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{liquidation_value, MarketParams, Side};
use crate::surface::{PolicyTable, Regime};

/// Generator identifier recorded next to backtest outputs.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9)";
/// How per-path streams are derived from the master seed.
pub const RNG_STREAMS: &str = "seed_from_u64(seed); set_stream(2*path) for price/trend, set_stream(2*path+1) for fills";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Price change rate `K = pi+ + pi-`, events per second.
    pub k_rate: f64,
    /// Mean reversion of the trend.
    pub theta: f64,
    /// Volatility of the trend.
    pub sigma: f64,
    /// Euler step, seconds.
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub p0: f64,
    /// Initial trend `varpi_0`.
    pub varpi0: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { k_rate: 1.0, theta: 2.0, sigma: 0.01, dt: 0.05, n_paths: 10_000, seed: 0, p0: 100.0, varpi0: 0.0 }
    }
}

impl SimConfig {
    pub fn validate(&self, params: &MarketParams) -> Result<()> {
        if !(self.k_rate.is_finite() && self.k_rate > 0.0) {
            return Err(Error::invalid("k_rate", format!("must be > 0, got {}", self.k_rate)));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::invalid("theta", format!("must be > 0, got {}", self.theta)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.n_paths < 1 {
            return Err(Error::invalid("n_mc", "must be >= 1"));
        }
        if !self.p0.is_finite() {
            return Err(Error::invalid("p0", "must be finite"));
        }
        if !(self.varpi0.is_finite() && self.varpi0.abs() <= self.k_rate) {
            return Err(Error::invalid("varpi0", format!("must satisfy |varpi0| <= K, got {}", self.varpi0)));
        }
        let load = (self.k_rate + params.lambda_ask + params.lambda_bid) * self.dt;
        if load > 0.2 {
            return Err(Error::Thinning { dt: self.dt, load });
        }
        Ok(())
    }

    /// Number of Euler steps covering `[0, horizon]`.
    pub fn n_steps(&self, horizon: f64) -> usize {
        ((horizon / self.dt).round() as usize).max(1)
    }
}

/// Per-path generator for one of the two streams (0: price/trend, 1: fills).
pub fn path_rng(seed: u64, path: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path + stream);
    rng
}

/// Trend and mid-price on the Euler grid; index `n` is time `n * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub varpi: Vec<f64>,
    pub price: Vec<f64>,
    pub up_jumps: usize,
    pub down_jumps: usize,
}

/// `(pi+, pi-)` for a clamped trend. The larger intensity is computed
/// first; the other one is then an exact difference, so the two add back to
/// `K` without rounding.
fn intensities(k_rate: f64, varpi: f64) -> (f64, f64) {
    if varpi >= 0.0 {
        let up = 0.5 * (k_rate + varpi);
        (up, k_rate - up)
    } else {
        let down = 0.5 * (k_rate - varpi);
        (k_rate - down, down)
    }
}

pub fn simulate_trend_and_price<R: Rng + ?Sized>(
    config: &SimConfig,
    tick: f64,
    n_steps: usize,
    rng: &mut R,
) -> MarketPath {
    let k = config.k_rate;
    let dt = config.dt;
    let shock = config.sigma * dt.sqrt();
    let mut varpi = Vec::with_capacity(n_steps + 1);
    let mut price = Vec::with_capacity(n_steps + 1);
    let mut w = config.varpi0;
    let mut p = config.p0;
    let (mut ups, mut downs) = (0, 0);
    varpi.push(w);
    price.push(p);
    for _ in 0..n_steps {
        let z: f64 = rng.sample(StandardNormal);
        w = (w * (1.0 - config.theta * dt) + shock * z).clamp(-k, k);
        let (pi_up, pi_down) = intensities(k, w);
        let up = rng.random::<f64>() < pi_up * dt;
        let down = rng.random::<f64>() < pi_down * dt;
        if up {
            p += tick;
            ups += 1;
        }
        if down {
            p -= tick;
            downs += 1;
        }
        varpi.push(w);
        price.push(p);
    }
    MarketPath { varpi, price, up_jumps: ups, down_jumps: downs }
}

/// Execution events per Euler step: `Some(volume)` when a market order
/// hits the best ask (bid) during step `n` (ending at time `(n+1) dt`).
#[derive(Debug, Clone, PartialEq)]
pub struct FillEvents {
    pub ask: Vec<Option<f64>>,
    pub bid: Vec<Option<f64>>,
}

impl FillEvents {
    pub fn count(&self, side: Side) -> usize {
        match side {
            Side::Ask => self.ask.iter().flatten().count(),
            Side::Bid => self.bid.iter().flatten().count(),
        }
    }
}

pub fn simulate_fills<R: Rng + ?Sized>(params: &MarketParams, dt: f64, n_steps: usize, rng: &mut R) -> FillEvents {
    let pa = params.lambda_ask * dt;
    let pb = params.lambda_bid * dt;
    let mut ask = Vec::with_capacity(n_steps);
    let mut bid = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let hit_a = rng.random::<f64>() < pa;
        ask.push(hit_a.then(|| params.volume_ask.sample(rng)));
        let hit_b = rng.random::<f64>() < pb;
        bid.push(hit_b.then(|| params.volume_bid.sample(rng)));
    }
    FillEvents { ask, bid }
}

/// Exogenous inputs of one path, shared by every strategy run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathInputs {
    pub market: MarketPath,
    pub fills: FillEvents,
}

impl PathInputs {
    pub fn generate(params: &MarketParams, config: &SimConfig, path: u64) -> Self {
        let n_steps = config.n_steps(params.horizon);
        let market = simulate_trend_and_price(config, params.tick, n_steps, &mut path_rng(config.seed, path, 0));
        let fills = simulate_fills(params, config.dt, n_steps, &mut path_rng(config.seed, path, 1));
        PathInputs { market, fills }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    /// Follow a solved market-making policy.
    Optimal(&'a PolicyTable),
    /// Quote both sides at all times, never send market orders.
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TradeKind {
    /// Passive execution of a resting limit order.
    Fill(Side),
    Market,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trade {
    pub time: f64,
    pub kind: TradeKind,
    /// Signed inventory change.
    pub volume: f64,
    /// Execution price per contract (best quote).
    pub price: f64,
    /// Fees paid on top of `volume * price`.
    pub fees: f64,
}

impl Trade {
    pub fn cash_flow(&self) -> f64 {
        -self.volume * self.price - self.fees
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathPoint {
    pub t: f64,
    pub price: f64,
    pub varpi: f64,
    pub cash: f64,
    pub inventory: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// `L(X_T, Y_T, P_T)`.
    pub terminal_wealth: f64,
    pub cash: f64,
    pub inventory: f64,
    pub final_price: f64,
    /// Sum of absolute inventory changes, fills and market orders.
    pub total_volume: f64,
    /// Sum of absolute market order sizes.
    pub market_volume: f64,
    pub trades: Vec<Trade>,
    /// Filled only when requested.
    pub series: Option<Vec<PathPoint>>,
}

/// Checks that `policy` can drive a simulation whose trend stays within
/// `[-c_required, c_required]` over `horizon`.
pub fn check_policy(policy: &PolicyTable, horizon: f64, c_required: f64) -> Result<()> {
    let (i_min, i_max) = policy.inventory_range();
    if i_min != -i_max {
        return Err(Error::PolicyCoverage(format!(
            "inventory nodes {i_min}..={i_max} are not symmetric; a market-making policy is required"
        )));
    }
    let span = policy.n_t() as f64 * policy.time_step();
    if (span - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::PolicyCoverage(format!("policy spans {span} s but the horizon is {horizon} s")));
    }
    let (lo, hi) = policy.trend_range();
    let slack = 1e-12 * c_required.max(1.0);
    if lo > -c_required + slack || hi < c_required - slack {
        return Err(Error::PolicyCoverage(format!(
            "trend nodes span [{lo}, {hi}] but the simulation needs [{}, {c_required}]",
            -c_required
        )));
    }
    Ok(())
}

/// Runs `strategy` on one path. Within each Euler step: trend update, price
/// jumps, fills against the current quotes, then a policy lookup at the new
/// state and any market order it prescribes. Market orders never exceed the
/// current inventory in size. At the horizon the position is liquidated.
pub fn run_strategy(
    strategy: Strategy<'_>,
    inputs: &PathInputs,
    params: &MarketParams,
    config: &SimConfig,
    record_series: bool,
) -> PathRecord {
    let n_steps = inputs.fills.ask.len();
    let dt = config.dt;
    let half = 0.5 * params.tick;
    let (c_lo, c_hi) = match strategy {
        Strategy::Optimal(policy) => policy.trend_range(),
        Strategy::Benchmark => (0.0, 0.0),
    };
    let decide = |t: f64, y: f64, varpi: f64| match strategy {
        Strategy::Optimal(policy) => {
            let entry = policy.lookup(t, y, (params.tick * varpi).clamp(c_lo, c_hi));
            let order = if entry.take { entry.take_steps as f64 * policy.dy() } else { 0.0 };
            (entry.regime, order)
        }
        Strategy::Benchmark => (Regime::BOTH, 0.0),
    };
    let relook = |t: f64, y: f64, varpi: f64| decide(t, y, varpi).0;

    let mut x = 0.0;
    let mut y = 0.0;
    let mut total = 0.0;
    let mut market = 0.0;
    let mut trades = Vec::new();
    let mut series = record_series.then(|| Vec::with_capacity(n_steps + 1));
    let (mut regime, _) = decide(0.0, 0.0, inputs.market.varpi[0]);
    if let Some(s) = series.as_mut() {
        s.push(PathPoint {
            t: 0.0,
            price: inputs.market.price[0],
            varpi: inputs.market.varpi[0],
            cash: x,
            inventory: y,
        });
    }

    for n in 0..n_steps {
        let t = (n + 1) as f64 * dt;
        let p = inputs.market.price[n + 1];
        let varpi = inputs.market.varpi[n + 1];
        if let (true, Some(z)) = (regime.ask, inputs.fills.ask[n]) {
            let trade = Trade { time: t, kind: TradeKind::Fill(Side::Ask), volume: -z, price: p + half, fees: 0.0 };
            x += trade.cash_flow();
            y -= z;
            total += z;
            trades.push(trade);
        }
        if let (true, Some(z)) = (regime.bid, inputs.fills.bid[n]) {
            let trade = Trade { time: t, kind: TradeKind::Fill(Side::Bid), volume: z, price: p - half, fees: 0.0 };
            x += trade.cash_flow();
            y += z;
            total += z;
            trades.push(trade);
        }
        if n + 1 < n_steps {
            let (next_regime, order) = decide(t, y, varpi);
            regime = next_regime;
            let size = order.abs().min(y.abs());
            if size > 0.0 {
                let xi = size.copysign(order);
                let trade = Trade {
                    time: t,
                    kind: TradeKind::Market,
                    volume: xi,
                    price: p + half.copysign(xi),
                    fees: size * params.fee + params.fixed_fee,
                };
                x += trade.cash_flow();
                y += xi;
                total += size;
                market += size;
                trades.push(trade);
                regime = relook(t, y, varpi);
            }
        }
        if let Some(s) = series.as_mut() {
            s.push(PathPoint { t, price: p, varpi, cash: x, inventory: y });
        }
    }
    let final_price = *inputs.market.price.last().expect("nonempty path");
    PathRecord {
        terminal_wealth: liquidation_value(x, y, final_price, params),
        cash: x,
        inventory: y,
        final_price,
        total_volume: total,
        market_volume: market,
        trades,
        series,
    }
}
