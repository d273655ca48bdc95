use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::MarketParams;

/// Discretization of time, inventory, and trend.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    /// Number of time steps; `h = T / n_t`.
    pub n_t: usize,
    /// Inventory nodes are `i * dy` for `i = -n_y..=n_y`.
    pub n_y: usize,
    /// Inventory bound `M`; `dy = M / n_y`.
    pub m_bound: f64,
    /// Number of trend nodes. With one node the solve uses the market trend.
    pub n_trend: usize,
    /// Trend nodes span `[-c_max, c_max]` when `n_trend > 1`.
    pub c_max: f64,
    /// Tail mass dropped when discretizing fill-volume laws.
    pub tail_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_t: 500, n_y: 100, m_bound: 100.0, n_trend: 20, c_max: 0.25, tail_tol: 1e-12 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_t < 1 {
            return Err(Error::invalid("n_t", "must be >= 1"));
        }
        if self.n_y < 1 {
            return Err(Error::invalid("n_y", "must be >= 1"));
        }
        if !(self.m_bound.is_finite() && self.m_bound > 0.0) {
            return Err(Error::invalid("m_bound", format!("must be finite and > 0, got {}", self.m_bound)));
        }
        if self.n_trend < 1 {
            return Err(Error::invalid("n_trend", "must be >= 1"));
        }
        if self.n_trend > 1 && !(self.c_max.is_finite() && self.c_max > 0.0) {
            return Err(Error::invalid("c_max", format!("must be finite and > 0, got {}", self.c_max)));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 0.5) {
            return Err(Error::invalid("tail_tol", format!("must lie in (0, 0.5), got {}", self.tail_tol)));
        }
        Ok(())
    }

    /// Enforces `h < 1/(lambda_a + lambda_b)`.
    pub fn check_cfl(&self, params: &MarketParams) -> Result<()> {
        let rate = params.lambda_ask + params.lambda_bid;
        let h = self.time_step(params.horizon);
        if rate > 0.0 && h * rate >= 1.0 {
            let limit = 1.0 / rate;
            let min_steps = (params.horizon * rate).floor() as usize + 1;
            return Err(Error::Cfl { h, limit, min_steps });
        }
        Ok(())
    }

    pub fn time_step(&self, horizon: f64) -> f64 {
        horizon / self.n_t as f64
    }

    pub fn dy(&self) -> f64 {
        self.m_bound / self.n_y as f64
    }

    pub fn inventory(&self, i: i64) -> f64 {
        i as f64 * self.dy()
    }

    /// Trend values solved for. Nodes are exact negatives of each other
    /// pairwise (`c_j = -c_{n-1-j}`).
    pub fn trend_nodes(&self, market_trend: f64) -> Vec<f64> {
        if self.n_trend == 1 {
            return vec![market_trend];
        }
        let last = (self.n_trend - 1) as f64;
        (0..self.n_trend).map(|j| self.c_max * (2.0 * j as f64 - last) / last).collect()
    }

    /// Same grid with time and inventory steps divided by `factor`.
    pub fn refined(&self, factor: usize) -> GridSpec {
        GridSpec { n_t: self.n_t * factor, n_y: self.n_y * factor, ..self.clone() }
    }
}
