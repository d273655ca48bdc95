//! Explicit backward scheme for the reduced market-making QVI.
//!
//! With `v = L(x, y, p) + w(t, y)`, the reduced value `w` solves
//!
//! ```text
//! w(t_N, y) = 0
//! w(t_k, y) = max[ T(w(t_{k+1}, .))(y), M(w(t_{k+1}, .))(y) ]
//! ```
//!
//! where `T` maximizes over the make regime `(l_a, l_b)` in `{0,1}^2`
//!
//! ```text
//! -h gamma rho y^2 + h y c + phi(y) (1 - l_a lambda_a h - l_b lambda_b h)
//!   + l_a lambda_a h ( sum_z phi(Proj(y - z)) mu_a(z) + F_a(y) )
//!   + l_b lambda_b h ( sum_z phi(Proj(y + z)) mu_b(z) + F_b(y) )
//! ```
//!
//! and `M` is the market-order obstacle
//! `sup_e phi(Proj(y + e)) - (delta/2 + eps)(|y + e| + |e| - |y|) - eps0`
//! over grid sizes `|e| <= |y|`. Each candidate is a nonnegative combination
//! of layer values, so the scheme is monotone in floating point too.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{fee_integral, liquidation_value, DiscreteMeasure, MarketParams, Side};
use crate::surface::{PolicyEntry, PolicyTable, Regime, ValueSurface};

/// Relative size of the default impulse threshold, as a fraction of the
/// value bound at `t = 0`.
pub const DEFAULT_IMPULSE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct QviSolver {
    params: MarketParams,
    grid: GridSpec,
    h: f64,
    dy: f64,
    n_y: i64,
    ask: DiscreteMeasure,
    bid: DiscreteMeasure,
    /// Fee integrals per inventory node, indexed by `i + n_y`.
    fee_ask: Vec<f64>,
    fee_bid: Vec<f64>,
    impulse_threshold: f64,
}

impl QviSolver {
    pub fn new(params: &MarketParams, grid: &GridSpec) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        grid.check_cfl(params)?;
        let dy = grid.dy();
        let n_y = grid.n_y as i64;
        let ask = DiscreteMeasure::from_law(&params.volume_ask, dy, grid.tail_tol)?;
        let bid = DiscreteMeasure::from_law(&params.volume_bid, dy, grid.tail_tol)?;
        let nodes = || (-n_y..=n_y).map(|i| i as f64 * dy);
        let fee_ask = nodes().map(|y| fee_integral(y, Side::Ask, params)).collect();
        let fee_bid = nodes().map(|y| fee_integral(y, Side::Bid, params)).collect();
        Ok(QviSolver {
            params: params.clone(),
            grid: grid.clone(),
            h: grid.time_step(params.horizon),
            dy,
            n_y,
            ask,
            bid,
            fee_ask,
            fee_bid,
            impulse_threshold: DEFAULT_IMPULSE_TOL * params.value_upper_bound(0.0, 0.0),
        })
    }

    /// Margin by which the obstacle must beat the make branch before a
    /// market order is recorded in the policy.
    pub fn with_impulse_threshold(mut self, eta: f64) -> Self {
        self.impulse_threshold = eta;
        self
    }

    pub fn impulse_threshold(&self) -> f64 {
        self.impulse_threshold
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn time_step(&self) -> f64 {
        self.h
    }

    pub fn measures(&self) -> (&DiscreteMeasure, &DiscreteMeasure) {
        (&self.ask, &self.bid)
    }

    fn width(&self) -> usize {
        (2 * self.n_y + 1) as usize
    }

    /// `sum_z phi(Proj(y - z)) mu_a(z)` at node `i`; atoms pushing below
    /// `-M` read the edge node and are summed as one tail block.
    fn ask_expectation(&self, i: i64, next: &[f64]) -> f64 {
        let n = self.n_y;
        let reach = (i + n) as usize;
        let masses = self.ask.masses();
        let last = reach.min(masses.len() - 1);
        let mut acc = 0.0;
        for (k, &m) in masses[..=last].iter().enumerate() {
            acc += m * next[reach - k];
        }
        acc + self.ask.tail_mass(reach + 1) * next[0]
    }

    fn bid_expectation(&self, i: i64, next: &[f64]) -> f64 {
        let n = self.n_y;
        let base = (i + n) as usize;
        let reach = (n - i) as usize;
        let masses = self.bid.masses();
        let last = reach.min(masses.len() - 1);
        let mut acc = 0.0;
        for (k, &m) in masses[..=last].iter().enumerate() {
            acc += m * next[base + k];
        }
        acc + self.bid.tail_mass(reach + 1) * next[2 * n as usize]
    }

    /// Continuation (make) branch at inventory node `i` against the next
    /// layer `next` (indexed by `i + n_y`), with the maximizing regime.
    /// Ties keep the regime with fewer live quotes.
    pub fn make_operator(&self, i: i64, trend: f64, next: &[f64]) -> (f64, Regime) {
        let idx = (i + self.n_y) as usize;
        let y = i as f64 * self.dy;
        let h = self.h;
        let source = -h * self.params.gamma * self.params.rho * y * y + h * y * trend;
        let here = next[idx];
        let ca = self.params.lambda_ask * h;
        let cb = self.params.lambda_bid * h;
        let gain_a = ca * (self.ask_expectation(i, next) + self.fee_ask[idx]);
        let gain_b = cb * (self.bid_expectation(i, next) + self.fee_bid[idx]);

        let candidates = [
            (here, Regime::NONE),
            (here * (1.0 - ca) + gain_a, Regime { ask: true, bid: false }),
            (here * (1.0 - cb) + gain_b, Regime { ask: false, bid: true }),
            (here * (1.0 - ca - cb) + gain_a + gain_b, Regime::BOTH),
        ];
        let mut best = candidates[0];
        for &c in &candidates[1..] {
            if c.0 > best.0 {
                best = c;
            }
        }
        (best.0 + source, best.1)
    }

    /// Market-order obstacle at node `i`: value and maximizing order size in
    /// inventory steps. Ties go to the smallest order, then to selling.
    pub fn take_operator(&self, i: i64, next: &[f64]) -> (f64, i64) {
        let n = self.n_y;
        let cost = self.params.crossing_cost() * self.dy;
        let value = |e: i64| {
            let target = (i + e).clamp(-n, n);
            let extra = (i + e).abs() + e.abs() - i.abs();
            next[(target + n) as usize] - cost * extra as f64 - self.params.fixed_fee
        };
        let mut best = (value(0), 0);
        for size in 1..=i.abs() {
            for e in [-size, size] {
                let v = value(e);
                if v > best.0 {
                    best = (v, e);
                }
            }
        }
        best
    }

    fn check_finite(&self, next: &[f64]) -> Result<()> {
        match next.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::NonFinite { index: pos as i64 - self.n_y, value: next[pos] }),
            None => Ok(()),
        }
    }

    fn node(&self, i: i64, trend: f64, next: &[f64]) -> (f64, PolicyEntry) {
        let (make, regime) = self.make_operator(i, trend, next);
        let (take, steps) = self.take_operator(i, next);
        let entry = PolicyEntry { regime, take: take - make > self.impulse_threshold, take_steps: steps };
        (make.max(take), entry)
    }

    /// One backward step for trend `trend`: the layer at `t_k` and its policy
    /// slice from the layer at `t_{k+1}`.
    pub fn scheme_step(&self, trend: f64, next: &[f64]) -> Result<(Vec<f64>, Vec<PolicyEntry>)> {
        if next.len() != self.width() {
            return Err(Error::invalid("layer", format!("expected {} nodes, got {}", self.width(), next.len())));
        }
        self.check_finite(next)?;
        let out: Vec<(f64, PolicyEntry)> =
            (-self.n_y..=self.n_y).into_par_iter().map(|i| self.node(i, trend, next)).collect();
        Ok(out.into_iter().unzip())
    }

    /// Full backward induction for one trend value: values `[k][i]` and policy `[k][i]`.
    pub fn solve_slice(&self, trend: f64) -> Result<(Vec<f64>, Vec<PolicyEntry>)> {
        let n_t = self.grid.n_t;
        let width = self.width();
        let mut values = vec![0.0; (n_t + 1) * width];
        let mut policy = vec![PolicyEntry::default(); n_t * width];
        for k in (0..n_t).rev() {
            let (head, tail) = values.split_at_mut((k + 1) * width);
            let (layer, slice) = self.scheme_step(trend, &tail[..width])?;
            head[k * width..].copy_from_slice(&layer);
            policy[k * width..(k + 1) * width].copy_from_slice(&slice);
        }
        Ok((values, policy))
    }

    /// Solves every trend node of the grid. Slices are independent.
    pub fn solve(&self) -> Result<(ValueSurface, PolicyTable)> {
        let trends = self.grid.trend_nodes(self.params.trend);
        let slices: Vec<(Vec<f64>, Vec<PolicyEntry>)> =
            trends.par_iter().map(|&c| self.solve_slice(c)).collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(slices.len() * (self.grid.n_t + 1) * self.width());
        let mut entries = Vec::with_capacity(slices.len() * self.grid.n_t * self.width());
        for (v, p) in slices {
            values.extend(v);
            entries.extend(p);
        }
        let surface = ValueSurface::from_parts(self.h, self.dy, self.grid.n_t, self.grid.n_y, trends.clone(), values);
        let policy = PolicyTable::from_parts(self.h, self.dy, self.grid.n_t, -self.n_y, self.n_y, trends, entries);
        Ok((surface, policy))
    }
}

/// Solves the reduced market-making QVI on `grid`.
pub fn backward_solve(params: &MarketParams, grid: &GridSpec) -> Result<(ValueSurface, PolicyTable)> {
    QviSolver::new(params, grid)?.solve()
}

/// Full value `v(t, x, y, p) = L(x, y, p) + w(t, y, c)`.
pub fn evaluate_full_value(
    x: f64,
    y: f64,
    p: f64,
    t: f64,
    trend: f64,
    surface: &ValueSurface,
    params: &MarketParams,
) -> f64 {
    liquidation_value(x, y, p, params) + surface.interpolate(t, y, trend)
}

/// Region of the `(t, y)` plane compared by [`refine_and_compare`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub t_min: f64,
    pub t_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn everywhere() -> Self {
        Window { t_min: f64::NEG_INFINITY, t_max: f64::INFINITY, y_min: f64::NEG_INFINITY, y_max: f64::INFINITY }
    }

    fn contains(&self, t: f64, y: f64) -> bool {
        (self.t_min..=self.t_max).contains(&t) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub factor: usize,
    pub base: GridSpec,
    pub refined: GridSpec,
    pub window: Window,
    /// Trend nodes compared (those of the base grid).
    pub trends: Vec<f64>,
    pub shared_nodes: usize,
    pub max_abs_diff: f64,
    /// Node attaining `max_abs_diff`, as `(t, y, c)`.
    pub argmax: (f64, f64, f64),
    /// `|w_base(0, 0) - w_refined(0, 0)|` on the first trend node.
    pub diff_at_origin: f64,
    pub base_origin_value: f64,
    pub refined_origin_value: f64,
    /// Value bound at `t = 0` for the first trend node.
    pub value_bound: f64,
}

/// Solves on `grid` and on the grid refined by `factor` in time and
/// inventory (same `M`), and compares values at shared nodes in `window`.
pub fn refine_and_compare(
    params: &MarketParams,
    grid: &GridSpec,
    factor: usize,
    window: Window,
) -> Result<RefinementReport> {
    if factor < 2 {
        return Err(Error::invalid("factor", format!("must be >= 2, got {factor}")));
    }
    let refined = grid.refined(factor);
    let (coarse, _) = backward_solve(params, grid)?;
    let (fine, _) = backward_solve(params, &refined)?;
    let n_y = grid.n_y as i64;
    let f = factor as i64;
    let mut shared = 0;
    let mut max_abs = 0.0f64;
    let mut argmax = (0.0, 0.0, coarse.trends()[0]);
    for (j, &c) in coarse.trends().iter().enumerate() {
        for k in 0..=grid.n_t {
            let t = k as f64 * coarse.time_step();
            for i in -n_y..=n_y {
                let y = i as f64 * coarse.dy();
                if !window.contains(t, y) {
                    continue;
                }
                shared += 1;
                let d = (coarse.value(k, i, j) - fine.value(k * factor, i * f, j)).abs();
                if d > max_abs {
                    max_abs = d;
                    argmax = (t, y, c);
                }
            }
        }
    }
    let base_origin_value = coarse.value(0, 0, 0);
    let refined_origin_value = fine.value(0, 0, 0);
    Ok(RefinementReport {
        factor,
        base: grid.clone(),
        refined,
        window,
        trends: coarse.trends().to_vec(),
        shared_nodes: shared,
        max_abs_diff: max_abs,
        argmax,
        diff_at_origin: (base_origin_value - refined_origin_value).abs(),
        base_origin_value,
        refined_origin_value,
        value_bound: params.value_upper_bound(0.0, coarse.trends()[0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver() -> QviSolver {
        let grid = GridSpec { n_trend: 1, ..GridSpec::default() };
        QviSolver::new(&MarketParams::default(), &grid).unwrap()
    }

    #[test]
    fn make_operator_on_terminal_layer() {
        let s = solver();
        let zero = vec![0.0; 201];
        let (v, r) = s.make_operator(0, 0.0, &zero);
        assert_eq!(v, 0.0);
        assert_eq!(r, Regime::NONE);
        let (v, r) = s.make_operator(20, 0.0, &zero);
        let f = 125.0 + 7.3 * (20.0 - 40.0 * (-1.0f64).exp());
        let expected = 0.2 * (-3.90625e-3 * 400.0 + 0.05 * f);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        assert!((v - 1.32329).abs() < 1e-4);
        assert_eq!(r, Regime { ask: true, bid: false });
        let (_, r) = s.make_operator(-20, 0.0, &zero);
        assert_eq!(r, Regime { ask: false, bid: true });
    }

    #[test]
    fn take_operator_examples() {
        let params = MarketParams { fixed_fee: 0.5, ..MarketParams::default() };
        let grid = GridSpec { n_trend: 1, ..GridSpec::default() };
        let s = QviSolver::new(&params, &grid).unwrap();
        let layer: Vec<f64> = (0..201).map(|i| (i as f64 * 0.37).sin()).collect();
        let (v, e) = s.take_operator(0, &layer);
        assert_eq!(e, 0);
        assert_eq!(v, layer[100] - 0.5);
        let zero = vec![0.0; 201];
        let (v, e) = s.take_operator(20, &zero);
        assert_eq!((v, e), (-0.5, 0));
        for i in -100..=100 {
            let (_, e) = s.take_operator(i, &layer);
            assert!(e.abs() <= i.abs());
        }
    }

    #[test]
    fn take_operator_prefers_reducing_inventory() {
        let s = solver();
        // Peak at y = 3: from y = 10 the best order sells 7 at no extra cost.
        let layer: Vec<f64> = (-100..=100).map(|i: i64| -((i - 3) as f64).powi(2)).collect();
        assert_eq!(s.take_operator(10, &layer), (0.0, -7));
        // Buying up to a sharp peak at y = 8 from y = 5 pays twice the crossing cost.
        let layer: Vec<f64> = (-100..=100).map(|i: i64| -10.0 * ((i - 8) as f64).powi(2)).collect();
        let (v, e) = s.take_operator(5, &layer);
        assert_eq!(e, 2);
        assert!((v - (-10.0 - 7.3 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn last_step_is_nonnegative() {
        let s = solver();
        let (layer, _) = s.scheme_step(0.0, &vec![0.0; 201]).unwrap();
        assert!(layer.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_non_finite_layer() {
        let s = solver();
        let mut layer = vec![0.0; 201];
        layer[7] = f64::NAN;
        assert!(matches!(s.scheme_step(0.0, &layer), Err(Error::NonFinite { index: -93, .. })));
    }

    #[test]
    fn rejects_cfl_violation() {
        let grid = GridSpec { n_t: 5, ..GridSpec::default() };
        assert!(matches!(QviSolver::new(&MarketParams::default(), &grid), Err(Error::Cfl { .. })));
    }

    #[test]
    fn single_step_grid_is_one_scheme_step() {
        let grid = GridSpec { n_t: 11, n_y: 4, m_bound: 20.0, n_trend: 1, ..GridSpec::default() };
        let params = MarketParams { horizon: 1.0, ..MarketParams::default() };
        let one = GridSpec { n_t: 1, ..grid };
        let s = QviSolver::new(&params, &one).unwrap();
        let (surface, _) = s.solve().unwrap();
        let (layer, _) = s.scheme_step(0.0, &[0.0; 9]).unwrap();
        assert_eq!(surface.layer(0, 0), &layer[..]);
        assert!(surface.layer(1, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_value_at_horizon_is_liquidation_value() {
        let grid = GridSpec { n_t: 20, n_y: 10, m_bound: 10.0, n_trend: 1, ..GridSpec::default() };
        let params = MarketParams::default();
        let (surface, _) = backward_solve(&params, &grid).unwrap();
        for y in [-7.5, 0.0, 3.0] {
            let v = evaluate_full_value(5.0, y, 96.5, params.horizon, 0.0, &surface, &params);
            assert_eq!(v, liquidation_value(5.0, y, 96.5, &params));
        }
        assert_eq!(evaluate_full_value(5.0, 0.0, 96.5, params.horizon, 0.0, &surface, &params), 5.0);
        for k in 0..=20 {
            for i in -10..=10i64 {
                let t = k as f64 * 5.0;
                let y = i as f64;
                let v = evaluate_full_value(1.0, y, 50.0, t, 0.0, &surface, &params);
                assert!(v >= liquidation_value(1.0, y, 50.0, &params));
            }
        }
    }

    #[test]
    fn refine_rejects_small_factor() {
        let grid = GridSpec { n_t: 20, n_y: 5, m_bound: 10.0, n_trend: 1, ..GridSpec::default() };
        assert!(refine_and_compare(&MarketParams::default(), &grid, 1, Window::everywhere()).is_err());
    }

    #[test]
    fn degenerate_dynamics_refine_to_zero() {
        let params = MarketParams { lambda_ask: 0.0, lambda_bid: 0.0, gamma: 1e-300, ..MarketParams::default() };
        let grid = GridSpec { n_t: 10, n_y: 5, m_bound: 10.0, n_trend: 1, ..GridSpec::default() };
        let report = refine_and_compare(&params, &grid, 2, Window::everywhere()).unwrap();
        assert_eq!(report.max_abs_diff, 0.0);
        assert_eq!(report.base_origin_value, 0.0);
    }
}
