//! Sell-only liquidation of a long position.
//!
//! The trader keeps an oversized limit sell order at the best ask, may send
//! market sell orders, and stops as soon as the inventory reaches zero or
//! goes short. The reduced value lives on the nonnegative inventory nodes
//! and is pinned to zero on `y <= 0` and at the horizon.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{fee_integral, DiscreteMeasure, MarketParams, Side};
use crate::qvi::DEFAULT_IMPULSE_TOL;
use crate::surface::{PolicyEntry, PolicyTable, Regime};

/// Reduced liquidation value `w[k][i]` for `i = 0..=n_y`; row `i = 0` is the
/// zero boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LiquidationSurface {
    h: f64,
    dy: f64,
    n_t: usize,
    n_y: usize,
    values: Vec<f64>,
}

impl LiquidationSurface {
    pub fn time_step(&self) -> f64 {
        self.h
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        let w = self.n_y + 1;
        &self.values[k * w..(k + 1) * w]
    }

    /// Value at time node `k` and inventory `i * dy`; zero for `i <= 0`.
    pub fn value(&self, k: usize, i: i64) -> f64 {
        if i <= 0 {
            0.0
        } else {
            self.layer(k)[i as usize]
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiquidationSolver {
    params: MarketParams,
    grid: GridSpec,
    h: f64,
    dy: f64,
    n_y: usize,
    ask: DiscreteMeasure,
    fee_ask: Vec<f64>,
    impulse_threshold: f64,
}

impl LiquidationSolver {
    pub fn new(params: &MarketParams, grid: &GridSpec) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        grid.check_cfl(params)?;
        let dy = grid.dy();
        let ask = DiscreteMeasure::from_law(&params.volume_ask, dy, grid.tail_tol)?;
        let fee_ask = (0..=grid.n_y).map(|i| fee_integral(i as f64 * dy, Side::Ask, params)).collect();
        Ok(LiquidationSolver {
            params: params.clone(),
            grid: grid.clone(),
            h: grid.time_step(params.horizon),
            dy,
            n_y: grid.n_y,
            ask,
            fee_ask,
            impulse_threshold: DEFAULT_IMPULSE_TOL * params.value_upper_bound(0.0, 0.0),
        })
    }

    pub fn with_impulse_threshold(mut self, eta: f64) -> Self {
        self.impulse_threshold = eta;
        self
    }

    pub fn impulse_threshold(&self) -> f64 {
        self.impulse_threshold
    }

    pub fn time_step(&self) -> f64 {
        self.h
    }

    /// Ask-only continuation at node `i >= 1`. Fills reaching `y <= 0` read
    /// the zero boundary.
    pub fn make_operator(&self, i: usize, trend: f64, next: &[f64]) -> f64 {
        let y = i as f64 * self.dy;
        let h = self.h;
        let source = -h * self.params.gamma * self.params.rho * y * y + h * y * trend;
        let masses = self.ask.masses();
        let last = (i - 1).min(masses.len() - 1);
        let mut expectation = 0.0;
        for (k, &m) in masses[..=last].iter().enumerate() {
            expectation += m * next[i - k];
        }
        let ca = self.params.lambda_ask * h;
        next[i] * (1.0 - ca) + ca * (expectation + self.fee_ask[i]) + source
    }

    /// Sell-only obstacle at node `i >= 1`: value and sell size in
    /// inventory steps (`-i..=0`). Ties go to the smallest sale.
    pub fn take_operator(&self, i: usize, next: &[f64]) -> (f64, i64) {
        let cost = self.params.crossing_cost() * self.dy;
        let i = i as i64;
        let value = |e: i64| {
            let target = i + e;
            let extra = target.abs() + e.abs() - i;
            let read = if target <= 0 { 0.0 } else { next[target as usize] };
            read - cost * extra as f64 - self.params.fixed_fee
        };
        let mut best = (value(0), 0);
        for e in (-i..0).rev() {
            let v = value(e);
            if v > best.0 {
                best = (v, e);
            }
        }
        best
    }

    /// One backward step: layer at `t_k` over `i = 0..=n_y` and its policy.
    pub fn liquidation_step(&self, trend: f64, next: &[f64]) -> Result<(Vec<f64>, Vec<PolicyEntry>)> {
        if next.len() != self.n_y + 1 {
            return Err(Error::invalid("layer", format!("expected {} nodes, got {}", self.n_y + 1, next.len())));
        }
        if let Some(pos) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: pos as i64, value: next[pos] });
        }
        let out: Vec<(f64, PolicyEntry)> = (0..=self.n_y)
            .into_par_iter()
            .map(|i| {
                if i == 0 {
                    return (0.0, PolicyEntry::default());
                }
                let make = self.make_operator(i, trend, next);
                let (take, steps) = self.take_operator(i, next);
                let entry = PolicyEntry {
                    regime: Regime { ask: true, bid: false },
                    take: take - make > self.impulse_threshold,
                    take_steps: steps,
                };
                (make.max(take), entry)
            })
            .collect();
        Ok(out.into_iter().unzip())
    }

    pub fn solve(&self) -> Result<(LiquidationSurface, PolicyTable)> {
        let n_t = self.grid.n_t;
        let width = self.n_y + 1;
        let trend = self.params.trend;
        let mut values = vec![0.0; (n_t + 1) * width];
        let mut entries = vec![PolicyEntry::default(); n_t * width];
        for k in (0..n_t).rev() {
            let (head, tail) = values.split_at_mut((k + 1) * width);
            let (layer, slice) = self.liquidation_step(trend, &tail[..width])?;
            head[k * width..].copy_from_slice(&layer);
            entries[k * width..(k + 1) * width].copy_from_slice(&slice);
        }
        let surface = LiquidationSurface { h: self.h, dy: self.dy, n_t, n_y: self.n_y, values };
        let policy = PolicyTable::from_parts(self.h, self.dy, n_t, 0, self.n_y as i64, vec![trend], entries);
        Ok((surface, policy))
    }
}

/// Solves the liquidation problem for the market trend `params.trend`.
pub fn solve_liquidation(params: &MarketParams, grid: &GridSpec) -> Result<(LiquidationSurface, PolicyTable)> {
    LiquidationSolver::new(params, grid)?.solve()
}

/// Frontier between the wait region and the sell region.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingCurve {
    pub times: Vec<f64>,
    /// Lower edge of the highest block of selling nodes, or `None` when no
    /// node sells at that time. Isolated flags below a waiting node (a
    /// zero-size order at tiny inventory) do not move the boundary.
    pub boundary: Vec<Option<f64>>,
    /// `(inventory, signed sell size)` for every selling node, per time node.
    pub sells: Vec<Vec<(f64, f64)>>,
}

impl TradingCurve {
    /// Times at which the boundary is defined; `b(t)` is reported monotone
    /// when it never increases with time.
    pub fn is_nonincreasing(&self) -> bool {
        let defined: Vec<f64> = self.boundary.iter().flatten().copied().collect();
        defined.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Reads the trading curve off a solved liquidation policy (first trend node).
pub fn extract_trading_curve(policy: &PolicyTable) -> TradingCurve {
    let (i_min, i_max) = policy.inventory_range();
    let n_t = policy.n_t();
    let mut times = Vec::with_capacity(n_t);
    let mut boundary = Vec::with_capacity(n_t);
    let mut sells = Vec::with_capacity(n_t);
    for k in 0..n_t {
        times.push(k as f64 * policy.time_step());
        let row: Vec<(f64, f64)> = (i_min.max(1)..=i_max)
            .filter(|&i| policy.get(k, i, 0).take)
            .map(|i| (i as f64 * policy.dy(), policy.take_quantity(k, i, 0)))
            .collect();
        let mut edge = None;
        for &(y, _) in row.iter().rev() {
            match edge {
                Some(prev) if prev - y > 1.5 * policy.dy() => break,
                _ => edge = Some(y),
            }
        }
        boundary.push(edge);
        sells.push(row);
    }
    TradingCurve { times, boundary, sells }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver() -> LiquidationSolver {
        LiquidationSolver::new(&MarketParams::default(), &GridSpec { n_trend: 1, ..GridSpec::default() }).unwrap()
    }

    #[test]
    fn last_step_make_branch() {
        let s = solver();
        let zero = vec![0.0; 101];
        let f = 125.0 + 7.3 * (20.0 - 40.0 * (-1.0f64).exp());
        let expected = 0.2 * (-3.90625e-3 * 400.0 + 0.05 * f);
        assert!((s.make_operator(20, 0.0, &zero) - expected).abs() < 1e-12);
        for i in 1..=100 {
            assert!(s.take_operator(i, &zero).0 <= 0.0);
        }
    }

    #[test]
    fn boundary_and_sell_only() {
        let (surface, policy) = solve_liquidation(&MarketParams::default(), &GridSpec::default()).unwrap();
        for k in 0..=surface.n_t() {
            assert_eq!(surface.layer(k)[0], 0.0);
            assert_eq!(surface.value(k, -3), 0.0);
        }
        assert!(surface.layer(surface.n_t()).iter().all(|&v| v == 0.0));
        assert!(surface.layer(0).iter().all(|&v| v >= 0.0));
        for (_, i, _, e) in policy.iter() {
            assert!(e.take_steps <= 0 && e.take_steps >= -i);
        }
    }

    #[test]
    fn empty_policy_has_no_boundary() {
        let entries = vec![PolicyEntry::default(); 3 * 5];
        let policy = PolicyTable::from_parts(1.0, 1.0, 3, 0, 4, vec![0.0], entries);
        let curve = extract_trading_curve(&policy);
        assert_eq!(curve.boundary, vec![None, None, None]);
    }

    #[test]
    fn boundary_skips_isolated_low_flags() {
        let mut entries = vec![PolicyEntry::default(); 6];
        let sell = |e| PolicyEntry { regime: Regime { ask: true, bid: false }, take: true, take_steps: e };
        entries[1] = sell(0);
        entries[4] = sell(-1);
        entries[5] = sell(-2);
        let policy = PolicyTable::from_parts(1.0, 1.0, 1, 0, 5, vec![0.0], entries);
        let curve = extract_trading_curve(&policy);
        assert_eq!(curve.boundary, vec![Some(4.0)]);
        assert_eq!(curve.sells[0].len(), 3);
    }

    #[test]
    fn no_fills_means_take_dominates() {
        let params = MarketParams { lambda_ask: 0.0, lambda_bid: 0.0, ..MarketParams::default() };
        let grid = GridSpec { n_t: 50, n_y: 20, m_bound: 20.0, n_trend: 1, ..GridSpec::default() };
        let s = LiquidationSolver::new(&params, &grid).unwrap();
        let (surface, policy) = s.solve().unwrap();
        for k in 0..grid.n_t {
            let next = surface.layer(k + 1);
            for i in 1..=20 {
                let make = s.make_operator(i, 0.0, next);
                let (take, _) = s.take_operator(i, next);
                assert!(take >= make);
                assert!(policy.get(k, i as i64, 0).take);
            }
        }
    }
}
