//! Seeded synthetic daily markets for verification runs.
//!
//! Log-closes follow either a Gaussian random walk or a discrete
//! Ornstein-Uhlenbeck process around the starting level. Each day's open
//! sits between the previous close and the new close: it carries a fixed
//! share of the day's log move plus independent open noise.

use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{write_csv, Bar, PriceSeries, Universe};

/// Fraction of each day's log move realized overnight.
const OVERNIGHT_SHARE: f64 = 0.3;
/// Open noise, in units of the daily volatility.
const OPEN_NOISE: f64 = 0.25;
/// High/low excursion beyond open and close, in units of daily volatility.
const RANGE_NOISE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    RandomWalk,
    OuMeanRevert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n_instruments: usize,
    pub n_days: usize,
    /// Daily standard deviation of log-close shocks.
    pub volatility: f64,
    /// Fraction of the log-price gap to the mean closed per day (OU only).
    pub reversion_rate: f64,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 1, 2).unwrap()
}

/// Daily reversion rate whose gap halves every `half_life` days.
pub fn reversion_rate_from_half_life(half_life: f64) -> f64 {
    1.0 - 0.5f64.powf(1.0 / half_life)
}

impl SyntheticSpec {
    pub fn random_walk(n_instruments: usize, n_days: usize, seed: u64) -> Self {
        SyntheticSpec {
            generator: Generator::RandomWalk,
            n_instruments,
            n_days,
            volatility: 0.02,
            reversion_rate: 0.0,
            seed,
            start: default_start(),
        }
    }

    pub fn ou(n_instruments: usize, n_days: usize, half_life: f64, seed: u64) -> Self {
        SyntheticSpec {
            generator: Generator::OuMeanRevert,
            reversion_rate: reversion_rate_from_half_life(half_life),
            ..Self::random_walk(n_instruments, n_days, seed)
        }
    }

    /// `min_days` is normally `warmup + max_lag + 2`.
    pub fn validate(&self, min_days: usize) -> Result<()> {
        if self.n_instruments < 2 {
            return Err(Error::Config("synthetic market needs at least 2 instruments".into()));
        }
        if self.n_days < min_days.max(3) {
            return Err(Error::Config(format!(
                "synthetic market needs at least {} days, got {}",
                min_days.max(3),
                self.n_days
            )));
        }
        if !(self.volatility > 0.0 && self.volatility.is_finite()) {
            return Err(Error::Config("volatility must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.reversion_rate) {
            return Err(Error::Config("reversion rate must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn instrument_id(i: usize) -> String {
        format!("SYN{i:04}")
    }
}

fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

fn generate_one(spec: &SyntheticSpec, index: usize, dates: &[NaiveDate]) -> Result<PriceSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let sigma = spec.volatility;
    let theta = match spec.generator {
        Generator::RandomWalk => 0.0,
        Generator::OuMeanRevert => spec.reversion_rate,
    };
    let level = (20.0 + 180.0 * (0.5 + 0.5 * normal().tanh())).ln();
    let mut prev = level;
    let mut bars = Vec::with_capacity(dates.len());
    for &date in dates {
        let x = level + (1.0 - theta) * (prev - level) + sigma * normal();
        let log_open = prev + OVERNIGHT_SHARE * (x - prev) + OPEN_NOISE * sigma * normal();
        let (open, close) = (log_open.exp(), x.exp());
        let high = open.max(close) * (RANGE_NOISE * sigma * normal().abs()).exp();
        let low = open.min(close) * (-RANGE_NOISE * sigma * normal().abs()).exp();
        let volume = (1e6 * (0.5 * normal()).exp()).round();
        bars.push(Bar::new(date, open, high, low, close, volume)?);
        prev = x;
    }
    PriceSeries::new(SyntheticSpec::instrument_id(index), bars)
}

/// Generates every instrument in memory.
pub fn generate_series(spec: &SyntheticSpec) -> Result<Vec<PriceSeries>> {
    spec.validate(3)?;
    let dates = weekdays(spec.start, spec.n_days);
    (0..spec.n_instruments)
        .map(|i| generate_one(spec, i, &dates))
        .collect()
}

/// Writes one CSV per instrument plus `universe.toml` into `dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, market_code: &str, dir: &Path) -> Result<Universe> {
    let series = generate_series(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in &series {
        write_csv(s, &dir.join(format!("{}.csv", s.instrument_id())))?;
    }
    let dates: Vec<NaiveDate> = series[0].dates().collect();
    let universe = Universe {
        market_code: market_code.to_string(),
        index_name: format!("{:?}", spec.generator).to_lowercase(),
        instruments: series.iter().map(|s| s.instrument_id().to_string()).collect(),
        start: dates[0],
        end: *dates.last().unwrap(),
    };
    let path = dir.join("universe.toml");
    std::fs::write(&path, universe.to_toml_string()).map_err(|e| Error::io(&path, e))?;
    Ok(universe)
}

/// Sample lag-1 autocorrelation.
pub fn lag1_autocorrelation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = values
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::load_csv;

    fn log_returns(s: &PriceSeries) -> Vec<f64> {
        s.bars().windows(2).map(|w| (w[1].close / w[0].close).ln()).collect()
    }

    #[test]
    fn bars_are_valid_and_weekday_dated() {
        let spec = SyntheticSpec::ou(3, 300, 3.0, 1);
        for s in generate_series(&spec).unwrap() {
            assert_eq!(s.len(), 300);
            for b in s.bars() {
                b.validate().unwrap();
                assert!(!matches!(b.date.weekday(), Weekday::Sat | Weekday::Sun));
            }
        }
    }

    #[test]
    fn same_seed_same_files() {
        let spec = SyntheticSpec::random_walk(2, 50, 9);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic(&spec, "SYN", a.path()).unwrap();
        generate_synthetic(&spec, "SYN", b.path()).unwrap();
        for name in ["SYN0000.csv", "SYN0001.csv", "universe.toml"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap()
            );
        }
        let back = load_csv(&a.path().join("SYN0001.csv"), "SYN0001").unwrap().series;
        assert_eq!(back, generate_series(&spec).unwrap()[1]);
        let other = generate_series(&SyntheticSpec::random_walk(2, 50, 10)).unwrap();
        assert_ne!(other[0], back);
    }

    #[test]
    fn zero_rate_ou_is_uncorrelated() {
        let mut spec = SyntheticSpec::ou(3, 5000, 3.0, 42);
        spec.reversion_rate = 0.0;
        for s in generate_series(&spec).unwrap() {
            assert!(lag1_autocorrelation(&log_returns(&s)).abs() < 0.05);
        }
    }

    #[test]
    fn ou_returns_are_negatively_autocorrelated() {
        let spec = SyntheticSpec::ou(2, 5000, 3.0, 42);
        for s in generate_series(&spec).unwrap() {
            assert!(lag1_autocorrelation(&log_returns(&s)) < -0.05);
        }
    }

    #[test]
    fn half_life_conversion() {
        let rate = reversion_rate_from_half_life(3.0);
        assert!(((1.0 - rate).powi(3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(SyntheticSpec::random_walk(1, 100, 0).validate(10).is_err());
        assert!(SyntheticSpec::random_walk(2, 20, 0).validate(32).is_err());
        assert!(SyntheticSpec::random_walk(2, 40, 0).validate(32).is_ok());
    }
}
