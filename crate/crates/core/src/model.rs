//! Market model of the one-tick pro-rata book.
//!
//! The mid-price `P` moves on the tick grid, the spread is constantly one tick
//! `delta`, and the trader's resting limit orders are always oversized: each
//! execution at the best ask (bid) fills a random volume drawn from
//! `volume_ask` (`volume_bid`) at Poisson event times of intensity
//! `lambda_ask` (`lambda_bid`). Market orders cross the spread and pay a
//! per-contract fee plus a fixed fee.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{Error, Result};

/// Side of the book a limit order rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Ask,
    Bid,
}

/// Law of the volume filled by one execution event, on `(0, inf)` contracts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum VolumeLaw {
    /// Exponential law with the given mean.
    Exponential { mean: f64 },
    /// Finitely supported law given by `(volume, probability)` pairs.
    Tabulated { atoms: Vec<(f64, f64)> },
}

impl VolumeLaw {
    pub fn exponential(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::InvalidLaw(format!("exponential mean must be finite and > 0, got {mean}")));
        }
        Ok(VolumeLaw::Exponential { mean })
    }

    /// Builds a tabulated law. Probabilities must be nonnegative and sum to one
    /// within `1e-9`; they are renormalized exactly. Atoms are sorted by volume.
    pub fn tabulated(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::InvalidLaw("tabulated law has no atoms".into()));
        }
        for &(z, p) in &atoms {
            if !(z.is_finite() && z > 0.0) {
                return Err(Error::InvalidLaw(format!("volume {z} is not a finite positive number")));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidLaw(format!("probability {p} is not finite and nonnegative")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        for a in &mut atoms {
            a.1 /= total;
        }
        Ok(VolumeLaw::Tabulated { atoms })
    }

    /// Point mass at `volume`.
    pub fn dirac(volume: f64) -> Result<Self> {
        Self::tabulated([(volume, 1.0)])
    }

    pub fn mean(&self) -> f64 {
        match self {
            VolumeLaw::Exponential { mean } => *mean,
            VolumeLaw::Tabulated { atoms } => atoms.iter().map(|(z, p)| z * p).sum(),
        }
    }

    /// Draws one fill volume.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            VolumeLaw::Exponential { mean } => Exp::new(1.0 / mean).expect("validated rate").sample(rng),
            VolumeLaw::Tabulated { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(z, p) in atoms {
                    acc += p;
                    if u < acc {
                        return z;
                    }
                }
                atoms[atoms.len() - 1].0
            }
        }
    }
}

/// Microstructure, fill, and risk constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketParams {
    /// Tick size `delta`, currency per contract. The spread is one tick.
    pub tick: f64,
    /// Per-contract fee on market orders.
    pub fee: f64,
    /// Fixed fee per market order.
    pub fixed_fee: f64,
    /// Execution intensity at the best ask, events per second.
    pub lambda_ask: f64,
    /// Execution intensity at the best bid, events per second.
    pub lambda_bid: f64,
    pub volume_ask: VolumeLaw,
    pub volume_bid: VolumeLaw,
    /// Risk aversion `gamma`.
    pub gamma: f64,
    /// Price variance rate `rho`, so that `d<P>_t = rho dt`.
    pub rho: f64,
    /// Horizon `T`, seconds.
    pub horizon: f64,
    /// Price drift `c_P`, currency per second. Zero for a martingale mid-price.
    pub trend: f64,
}

impl Default for MarketParams {
    /// EURIBOR-like calibration: 12.5 tick, one price change per second.
    fn default() -> Self {
        let tick = 12.5;
        MarketParams {
            tick,
            fee: 1.05,
            fixed_fee: 0.0,
            lambda_ask: 0.05,
            lambda_bid: 0.05,
            volume_ask: VolumeLaw::Exponential { mean: 20.0 },
            volume_bid: VolumeLaw::Exponential { mean: 20.0 },
            gamma: 2.5e-5,
            rho: tick * tick,
            horizon: 100.0,
            trend: 0.0,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        }
        fn nonnegative(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")))
            }
        }
        positive("delta", self.tick)?;
        nonnegative("eps", self.fee)?;
        nonnegative("eps0", self.fixed_fee)?;
        nonnegative("lambda_a", self.lambda_ask)?;
        nonnegative("lambda_b", self.lambda_bid)?;
        positive("gamma", self.gamma)?;
        positive("rho", self.rho)?;
        positive("T", self.horizon)?;
        if !self.trend.is_finite() {
            return Err(Error::invalid("c_p", "must be finite"));
        }
        for (name, law) in [("mu_mean_a", &self.volume_ask), ("mu_mean_b", &self.volume_bid)] {
            let mean = law.mean();
            if !(mean.is_finite() && mean > 0.0) {
                return Err(Error::invalid(name, format!("volume law mean must be > 0, got {mean}")));
            }
        }
        Ok(())
    }

    /// Cost per contract of crossing the spread with a market order.
    pub fn crossing_cost(&self) -> f64 {
        0.5 * self.tick + self.fee
    }

    pub fn intensity(&self, side: Side) -> f64 {
        match side {
            Side::Ask => self.lambda_ask,
            Side::Bid => self.lambda_bid,
        }
    }

    pub fn volume_law(&self, side: Side) -> &VolumeLaw {
        match side {
            Side::Ask => &self.volume_ask,
            Side::Bid => &self.volume_bid,
        }
    }

    /// Largest growth rate of the reduced value function under drift `trend`:
    /// `c^2/(4 gamma rho) + sum over sides of lambda (delta + eps) mean`.
    pub fn growth_bound(&self, trend: f64) -> f64 {
        trend * trend / (4.0 * self.gamma * self.rho)
            + self.lambda_ask * (self.tick + self.fee) * self.volume_ask.mean()
            + self.lambda_bid * (self.tick + self.fee) * self.volume_bid.mean()
    }

    /// Upper bound `(T - t) * growth_bound(trend)` on the reduced value at time `t`.
    pub fn value_upper_bound(&self, t: f64, trend: f64) -> f64 {
        (self.horizon - t) * self.growth_bound(trend)
    }
}

/// Cash obtained by liquidating inventory `y` at once with a market order.
pub fn liquidation_value(x: f64, y: f64, p: f64, params: &MarketParams) -> f64 {
    x + y * p - y.abs() * params.crossing_cost() - params.fixed_fee
}

/// Book value of the portfolio at mid-price.
pub fn mark_to_market(x: f64, y: f64, p: f64) -> f64 {
    x + y * p
}

/// Expected gain in liquidation value per execution event on `side` at
/// inventory `y`: the integral of `delta/2 z + (delta/2 + eps)(|y| - |y -+ z|)`
/// against the continuous volume law (`-` for the ask, `+` for the bid).
pub fn fee_integral(y: f64, side: Side, params: &MarketParams) -> f64 {
    // The bid side is the mirror image of the ask side.
    let y_ask = match side {
        Side::Ask => y,
        Side::Bid => -y,
    };
    let half = 0.5 * params.tick;
    let cross = params.crossing_cost();
    match params.volume_law(side) {
        VolumeLaw::Exponential { mean } => {
            if y_ask <= 0.0 {
                // |y| - |y - z| = -z for every fill.
                -params.fee * mean
            } else {
                // E|y - z| = y - mean + 2 mean exp(-y/mean)
                half * mean + cross * (mean - 2.0 * mean * (-y_ask / mean).exp())
            }
        }
        VolumeLaw::Tabulated { atoms } => {
            atoms.iter().map(|&(z, p)| p * (half * z + cross * (y_ask.abs() - (y_ask - z).abs()))).sum()
        }
    }
}

/// Fill-volume law discretized on multiples of the inventory step.
///
/// Atom `i` sits at `i * step` and carries the mass of `[i step, (i+1) step)`.
/// The tail beyond the last atom is lumped into it, so masses sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    step: f64,
    masses: Vec<f64>,
    /// `tails[s]` is the mass of atoms `s..`, summed from the last atom down.
    tails: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn from_law(law: &VolumeLaw, step: f64, tail_tol: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("dy", format!("inventory step must be > 0, got {step}")));
        }
        if !(tail_tol > 0.0 && tail_tol < 0.5) {
            return Err(Error::invalid("tail_tol", format!("must lie in (0, 0.5), got {tail_tol}")));
        }
        let masses = match law {
            VolumeLaw::Exponential { mean } => {
                let cell = -(-step / mean).exp_m1();
                let mut masses = Vec::new();
                let mut i = 0usize;
                // Stop at the first atom whose residual tail is below tolerance.
                while (-((i + 1) as f64) * step / mean).exp() >= tail_tol {
                    masses.push((-(i as f64) * step / mean).exp() * cell);
                    i += 1;
                }
                let head: f64 = masses.iter().sum();
                masses.push((1.0 - head).max(0.0));
                masses
            }
            VolumeLaw::Tabulated { atoms } => {
                let mut masses: Vec<f64> = Vec::new();
                for &(z, p) in atoms {
                    // Snap volumes sitting on a cell boundary into that cell.
                    let i = (z / step + 1e-9).floor() as usize;
                    if masses.len() <= i {
                        masses.resize(i + 1, 0.0);
                    }
                    masses[i] += p;
                }
                let mut tail = 0.0;
                let mut cut = masses.len() - 1;
                while cut > 0 && tail + masses[cut] < tail_tol {
                    tail += masses[cut];
                    cut -= 1;
                }
                masses.truncate(cut + 1);
                let head: f64 = masses[..cut].iter().sum();
                masses[cut] = (1.0 - head).max(0.0);
                masses
            }
        };
        let mut tails = vec![0.0; masses.len() + 1];
        for i in (0..masses.len()).rev() {
            tails[i] = tails[i + 1] + masses[i];
        }
        Ok(DiscreteMeasure { step, masses, tails })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Index of the last atom.
    pub fn max_index(&self) -> usize {
        self.masses.len() - 1
    }

    /// Masses indexed by atom; atom `i` sits at `i * step`.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// `(volume, mass)` pairs in increasing volume.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.masses.iter().enumerate().map(move |(i, &m)| (i as f64 * self.step, m))
    }

    /// Mass carried by atoms with index `>= start`.
    pub fn tail_mass(&self, start: usize) -> f64 {
        self.tails.get(start).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}
