//! Kalman-filter price-reversal backtester.
//!
//! Each instrument's daily closes are run through a scalar local-level
//! Kalman filter. The gap between today's close and the filtered value is
//! turned into a next-day reversal forecast, forecasts are z-scored across
//! the market every day, and a dollar-neutral book proportional to the
//! z-scores is simulated under three execution timings:
//!
//! - `exec1`: next open to the following open,
//! - `exec2`: signal close to next close,
//! - `exec3`: next open to next close.
//!
//! Results are reported as daily return on gross (ROG, in bps) and
//! annualized Sharpe ratio.

pub mod backtest;
pub mod config;
pub mod error;
pub mod kalman;
pub mod market_data;
pub mod metrics;
pub mod pipeline;
pub mod portfolio;
pub mod report;
pub mod signal;
pub mod synthetic;

pub use error::{Error, Result};
