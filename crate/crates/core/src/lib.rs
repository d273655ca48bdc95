//! Optimal high-frequency market making and liquidation in a one-tick
//! pro-rata limit order book.
//!
//! The crate computes the reduced value function `w` of the make/take
//! control problem (`v = L + w`) with an explicit monotone backward scheme,
//! solves the sell-only liquidation variant and its optimal trading curve,
//! and backtests the resulting policies on a simulated Cox-process market.

pub mod backtest;
pub mod error;
pub mod grid;
pub mod liquidation;
pub mod model;
pub mod qvi;
pub mod sim;
pub mod surface;

pub use error::{Error, Result};
pub use grid::GridSpec;
pub use model::{fee_integral, liquidation_value, mark_to_market, DiscreteMeasure, MarketParams, Side, VolumeLaw};
pub use qvi::{backward_solve, evaluate_full_value, refine_and_compare, QviSolver, RefinementReport, Window};
pub use surface::{PolicyEntry, PolicyTable, Regime, ValueSurface};
