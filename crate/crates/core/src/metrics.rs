//! Summary statistics over daily return-on-gross series.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::DailyPnL;
use crate::error::{Error, Result};

pub const DEFAULT_PERIODS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean_rog_bps: f64,
    /// `sqrt(periods_per_year) * mean / sd`, sample sd. Infinite when the
    /// series has no variance but a nonzero mean.
    #[serde(with = "extended_float")]
    pub sharpe_annualized: f64,
    #[serde(with = "extended_float")]
    pub t_stat: f64,
    pub n_days: usize,
    /// Largest fall of the cumulative ROG curve from a running peak
    /// (the curve starts at 0). Never positive.
    pub max_drawdown_bps: f64,
    pub cum_rog_bps: f64,
}

/// JSON has no infinities; write them as `"inf"`/`"-inf"`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// Arithmetic running sum.
pub fn running_sum(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

pub fn max_drawdown(curve: &[f64]) -> f64 {
    let mut peak = 0.0f64;
    let mut worst = 0.0f64;
    for &v in curve {
        peak = peak.max(v);
        worst = worst.min(v - peak);
    }
    worst
}

pub fn mean_and_sample_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ratio(mean: f64, sd: f64, scale: f64) -> f64 {
    if sd > 0.0 {
        scale.sqrt() * mean / sd
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    }
}

/// Statistics over a series of daily ROG values in bps.
pub fn summarize_rog(rog_bps: &[f64], periods_per_year: f64) -> Result<SummaryStats> {
    if rog_bps.is_empty() {
        return Err(Error::EmptyInput("daily returns"));
    }
    let n = rog_bps.len();
    let (mean, mut sd) = mean_and_sample_sd(rog_bps);
    let magnitude = rog_bps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sd <= 1e-14 * magnitude {
        sd = 0.0;
    }
    let curve = running_sum(rog_bps);
    Ok(SummaryStats {
        mean_rog_bps: mean,
        sharpe_annualized: ratio(mean, sd, periods_per_year),
        t_stat: ratio(mean, sd, n as f64),
        n_days: n,
        max_drawdown_bps: max_drawdown(&curve),
        cum_rog_bps: *curve.last().unwrap(),
    })
}

pub fn summarize(daily: &[DailyPnL], periods_per_year: f64) -> Result<SummaryStats> {
    let rog: Vec<f64> = daily.iter().map(|d| d.rog_bps).collect();
    summarize_rog(&rog, periods_per_year)
}

/// Running sum of ROG by date, for plotting.
pub fn cumulative_curve(daily: &[DailyPnL]) -> Vec<(NaiveDate, f64)> {
    let rog: Vec<f64> = daily.iter().map(|d| d.rog_bps).collect();
    daily.iter().map(|d| d.date).zip(running_sum(&rog)).collect()
}
