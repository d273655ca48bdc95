//! Solved value surfaces and policy tables.

use serde::Serialize;

/// Make regime: which sides carry a resting limit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize)]
pub struct Regime {
    pub ask: bool,
    pub bid: bool,
}

impl Regime {
    pub const NONE: Regime = Regime { ask: false, bid: false };
    pub const BOTH: Regime = Regime { ask: true, bid: true };
}

/// Decision at one `(time, inventory, trend)` node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize)]
pub struct PolicyEntry {
    pub regime: Regime,
    /// Send a market order of `take_steps * dy` contracts.
    pub take: bool,
    /// Signed market order size in inventory steps; positive buys.
    pub take_steps: i64,
}

/// Reduced value `w` on the `(time, inventory, trend)` grid.
///
/// Stored slice-major: all of trend node `j`, then time, then inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub(crate) h: f64,
    pub(crate) dy: f64,
    pub(crate) n_t: usize,
    pub(crate) n_y: usize,
    pub(crate) trends: Vec<f64>,
    pub(crate) values: Vec<f64>,
}

impl ValueSurface {
    /// Assembles a surface from raw values in `[j][k][i + n_y]` order.
    pub fn from_parts(h: f64, dy: f64, n_t: usize, n_y: usize, trends: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), trends.len() * (n_t + 1) * (2 * n_y + 1), "surface size mismatch");
        ValueSurface { h, dy, n_t, n_y, trends, values }
    }

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

    pub fn trends(&self) -> &[f64] {
        &self.trends
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    fn width(&self) -> usize {
        2 * self.n_y + 1
    }

    /// Inventory layer at time node `k` for trend node `j`, indexed by `i + n_y`.
    pub fn layer(&self, k: usize, j: usize) -> &[f64] {
        let w = self.width();
        let start = (j * (self.n_t + 1) + k) * w;
        &self.values[start..start + w]
    }

    pub fn value(&self, k: usize, i: i64, j: usize) -> f64 {
        self.layer(k, j)[(i + self.n_y as i64) as usize]
    }

    pub fn nearest_trend(&self, c: f64) -> usize {
        nearest_index(&self.trends, c)
    }

    /// `w(t, y, c)`: linear in time and inventory, nearest node in trend.
    /// Points outside the grid are clamped onto it.
    pub fn interpolate(&self, t: f64, y: f64, c: f64) -> f64 {
        let j = self.nearest_trend(c);
        let s = (t / self.h).clamp(0.0, self.n_t as f64);
        let k0 = (s.floor() as usize).min(self.n_t - 1);
        let ft = s - k0 as f64;
        let n = self.n_y as f64;
        let u = (y / self.dy).clamp(-n, n);
        let i0 = (u.floor() as i64).min(self.n_y as i64 - 1);
        let fy = u - i0 as f64;
        let at = |k: usize| {
            let a = self.value(k, i0, j);
            let b = self.value(k, i0 + 1, j);
            (1.0 - fy) * a + fy * b
        };
        (1.0 - ft) * at(k0) + ft * at(k0 + 1)
    }
}

/// Policy on a time-inventory-trend grid. Time nodes run over `0..n_t`
/// (no decision at the horizon) and inventory indices over `i_min..=i_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub(crate) h: f64,
    pub(crate) dy: f64,
    pub(crate) n_t: usize,
    pub(crate) i_min: i64,
    pub(crate) i_max: i64,
    pub(crate) trends: Vec<f64>,
    pub(crate) entries: Vec<PolicyEntry>,
}

impl PolicyTable {
    /// Assembles a table from entries in `[j][k][i - i_min]` order.
    pub fn from_parts(
        h: f64,
        dy: f64,
        n_t: usize,
        i_min: i64,
        i_max: i64,
        trends: Vec<f64>,
        entries: Vec<PolicyEntry>,
    ) -> Self {
        let width = (i_max - i_min + 1) as usize;
        assert_eq!(entries.len(), trends.len() * n_t * width, "policy size mismatch");
        PolicyTable { h, dy, n_t, i_min, i_max, trends, entries }
    }

    pub fn time_step(&self) -> f64 {
        self.h
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn inventory_range(&self) -> (i64, i64) {
        (self.i_min, self.i_max)
    }

    pub fn trends(&self) -> &[f64] {
        &self.trends
    }

    fn width(&self) -> usize {
        (self.i_max - self.i_min + 1) as usize
    }

    pub fn get(&self, k: usize, i: i64, j: usize) -> PolicyEntry {
        debug_assert!(k < self.n_t && (self.i_min..=self.i_max).contains(&i));
        let idx = (j * self.n_t + k) * self.width() + (i - self.i_min) as usize;
        self.entries[idx]
    }

    /// Market order size in contracts at a node.
    pub fn take_quantity(&self, k: usize, i: i64, j: usize) -> f64 {
        self.get(k, i, j).take_steps as f64 * self.dy
    }

    /// Iterates `(k, i, j, entry)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, i64, usize, PolicyEntry)> + '_ {
        let width = self.width();
        self.entries.iter().enumerate().map(move |(idx, &e)| {
            let i = self.i_min + (idx % width) as i64;
            let k = (idx / width) % self.n_t;
            let j = idx / (width * self.n_t);
            (k, i, j, e)
        })
    }

    /// Node governing state `(t, y, c)`: the time node whose interval
    /// `[t_k, t_{k+1})` contains `t`, and the nearest inventory and trend nodes.
    pub fn locate(&self, t: f64, y: f64, c: f64) -> (usize, i64, usize) {
        let k = ((t / self.h + 1e-9).floor().max(0.0) as usize).min(self.n_t - 1);
        let i = ((y / self.dy).round() as i64).clamp(self.i_min, self.i_max);
        (k, i, nearest_index(&self.trends, c))
    }

    pub fn lookup(&self, t: f64, y: f64, c: f64) -> PolicyEntry {
        let (k, i, j) = self.locate(t, y, c);
        self.get(k, i, j)
    }

    /// Closed range of trend values served.
    pub fn trend_range(&self) -> (f64, f64) {
        let lo = self.trends.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.trends.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn nearest_index(nodes: &[f64], c: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (j, &node) in nodes.iter().enumerate() {
        let d = (node - c).abs();
        if d < dist {
            dist = d;
            best = j;
        }
    }
    best
}
