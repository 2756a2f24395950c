//! Next-day reversal forecasts from filtered closes.
//!
//! The forecast is the normalized gap between today's close `C` and the
//! filtered fair value `C_k`, `(C - C_k) / (0.5 (C + C_k))`. Under the
//! default [`SignConvention::Reversal`] it is negated, so a close above fair
//! value gives a negative (short) forecast.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{filter_series, ScalarFilterConfig, ScalarStep};
use crate::market_data::{AlignedSeries, TradingCalendar};

/// Direction applied to the normalized price gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Bet on the price moving back toward fair value.
    #[default]
    Reversal,
    /// Use the gap as printed, i.e. bet on continuation.
    Literal,
}

/// Which filter output stands in for fair value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairValue {
    /// `x_{k|k}`, the filtered value of today's close.
    #[default]
    Posterior,
    /// `x_{k|k-1}`, the one-step-ahead prediction made before today's close.
    Prior,
}

fn normalized_gap(close: f64, c_kalman: f64) -> Result<f64> {
    if !(close.is_finite() && c_kalman.is_finite() && close > 0.0 && c_kalman > 0.0) {
        return Err(Error::NonPositivePrice { close, c_kalman });
    }
    Ok((close - c_kalman) / (0.5 * (close + c_kalman)))
}

/// Expected next-day return when the price reverts to `c_kalman`.
pub fn reversal_forecast(close: f64, c_kalman: f64) -> Result<f64> {
    Ok(-normalized_gap(close, c_kalman)?)
}

impl SignConvention {
    pub fn forecast(self, close: f64, c_kalman: f64) -> Result<f64> {
        match self {
            SignConvention::Reversal => reversal_forecast(close, c_kalman),
            SignConvention::Literal => normalized_gap(close, c_kalman),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Observed bars (including the current one) required before an
    /// instrument produces forecasts.
    pub warmup: usize,
    pub fair_value: FairValue,
    pub sign: SignConvention,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            warmup: 20,
            fair_value: FairValue::Posterior,
            sign: SignConvention::Reversal,
        }
    }
}

/// Filter output for one instrument over its observed sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredInstrument {
    pub instrument_id: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
    pub steps: Vec<ScalarStep>,
}

/// Filters the observed closes of `aligned`; missing sessions are skipped,
/// not filled.
pub fn filter_instrument(
    aligned: &AlignedSeries,
    calendar: &TradingCalendar,
    config: &ScalarFilterConfig,
) -> Result<FilteredInstrument> {
    let (dates, closes): (Vec<NaiveDate>, Vec<f64>) = aligned
        .observed()
        .map(|(i, bar)| (calendar.sessions()[i], bar.close))
        .unzip();
    let steps = if closes.is_empty() {
        Vec::new()
    } else {
        filter_series(&closes, config)?
    };
    Ok(FilteredInstrument {
        instrument_id: aligned.instrument_id().to_string(),
        dates,
        closes,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub instrument_id: String,
    pub date: NaiveDate,
    pub close: f64,
    pub c_kalman: f64,
    pub raw_forecast: f64,
}

/// Forecasts for one market keyed by date, then instrument.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastPanel {
    points: BTreeMap<NaiveDate, BTreeMap<String, ForecastPoint>>,
}

impl ForecastPanel {
    pub fn insert(&mut self, point: ForecastPoint) -> Result<()> {
        let day = self.points.entry(point.date).or_default();
        if day.contains_key(&point.instrument_id) {
            return Err(Error::DuplicateInstrument(point.instrument_id));
        }
        day.insert(point.instrument_id.clone(), point);
        Ok(())
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.points.keys().copied()
    }

    pub fn on(&self, date: NaiveDate) -> Option<&BTreeMap<String, ForecastPoint>> {
        self.points.get(&date)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NaiveDate, &BTreeMap<String, ForecastPoint>)> {
        self.points.iter()
    }

    pub fn points(&self) -> impl Iterator<Item = &ForecastPoint> {
        self.points.values().flat_map(|d| d.values())
    }

    pub fn len(&self) -> usize {
        self.points.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Drops every date after `last`.
    pub fn truncated(&self, last: NaiveDate) -> ForecastPanel {
        ForecastPanel {
            points: self
                .points
                .range(..=last)
                .map(|(d, v)| (*d, v.clone()))
                .collect(),
        }
    }
}

/// Builds the panel from per-instrument filter output, skipping each
/// instrument's first `warmup - 1` observations.
pub fn forecast_panel(filtered: &[FilteredInstrument], config: &SignalConfig) -> Result<ForecastPanel> {
    let mut panel = ForecastPanel::default();
    let mut seen = std::collections::BTreeSet::new();
    for inst in filtered {
        if !seen.insert(inst.instrument_id.as_str()) {
            return Err(Error::DuplicateInstrument(inst.instrument_id.clone()));
        }
        let start = config.warmup.saturating_sub(1);
        for i in start..inst.steps.len() {
            let step = &inst.steps[i];
            let c_kalman = match config.fair_value {
                FairValue::Posterior => step.x_post,
                FairValue::Prior => step.x_prior,
            };
            let close = inst.closes[i];
            panel.insert(ForecastPoint {
                instrument_id: inst.instrument_id.clone(),
                date: inst.dates[i],
                close,
                c_kalman,
                raw_forecast: config.sign.forecast(close, c_kalman)?,
            })?;
        }
    }
    Ok(panel)
}
