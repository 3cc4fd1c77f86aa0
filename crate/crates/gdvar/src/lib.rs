//! Score-driven generalized-distribution models for intraday returns,
//! bootstrap aggregation into a simulated daily return distribution, daily
//! Value-at-Risk forecasts, and a coverage backtesting battery.
//!
//! The pipeline:
//! 1. [`preprocess`] builds the T×N intraday return panel (negated, shifted
//!    positive) and the deterministic 366-day seasonal component.
//! 2. [`dist`] provides the Pareto IV family and the three generalized
//!    distributions built on it.
//! 3. [`filter`] evolves each slot's two dynamic parameters through the
//!    standardized-score recursion; [`estimate`] fits the coefficients by
//!    maximum likelihood.
//! 4. [`bootstrap`] discretizes each slot's conditional distribution on a
//!    quantile grid, simulates daily return sums, and reads VaR off the
//!    simulated distribution, rolling the scheme across the sample.
//! 5. [`backtest`] validates the forecasts: coverage tests, the dynamic
//!    quantile test, score autocorrelation, and the model confidence set.
//!
//! Data-parallel loops honor the `parallel` feature (rayon; on by default)
//! and the `GDVAR_WORKERS` environment cap, with identical results in
//! sequential mode.

pub mod backtest;
pub mod bootstrap;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod filter;
pub mod preprocess;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
