//! Daily OHLCV histories: validation, loading, calendars and alignment.

mod csv_io;
mod fetch;

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, parse_csv, write_csv, LoadReport, LoadedSeries, PriceBasis};
pub use fetch::{fetch_remote, FetchError, HttpTransport, RemoteSource, Transport};

/// Rows may be skipped as malformed up to this fraction of the file.
pub const MAX_SKIPPED_FRACTION: f64 = 0.05;

/// One trading day for one instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    pub fn new(
        date: NaiveDate,
        open: f64,
        high: f64,
        low: f64,
        close: f64,
        volume: f64,
    ) -> Result<Self> {
        let bar = Bar {
            date,
            open,
            high,
            low,
            close,
            volume,
        };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| {
            Err(Error::InvalidBar {
                date: self.date,
                reason: reason.to_string(),
            })
        };
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return invalid("prices must be finite and > 0");
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return invalid("volume must be finite and >= 0");
        }
        if self.low > self.open.min(self.close) {
            return invalid("low above min(open, close)");
        }
        if self.high < self.open.max(self.close) {
            return invalid("high below max(open, close)");
        }
        Ok(())
    }
}

/// Date-ordered bars of a single instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    instrument_id: String,
    bars: Vec<Bar>,
}

impl PriceSeries {
    /// Bars must already be valid and in strictly increasing date order.
    pub fn new(instrument_id: impl Into<String>, bars: Vec<Bar>) -> Result<Self> {
        let instrument_id = instrument_id.into();
        for bar in &bars {
            bar.validate()?;
        }
        for pair in bars.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(Error::DuplicateDate {
                    instrument: instrument_id,
                    date: pair[1].date,
                });
            }
        }
        Ok(PriceSeries {
            instrument_id,
            bars,
        })
    }

    pub fn instrument_id(&self) -> &str {
        &self.instrument_id
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.bars.iter().map(|b| b.date)
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    /// Keeps bars with `start <= date <= end`.
    pub fn restrict(&self, start: NaiveDate, end: NaiveDate) -> PriceSeries {
        PriceSeries {
            instrument_id: self.instrument_id.clone(),
            bars: self
                .bars
                .iter()
                .filter(|b| b.date >= start && b.date <= end)
                .copied()
                .collect(),
        }
    }
}

/// A market's instrument list with its history window (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    pub market_code: String,
    pub index_name: String,
    pub instruments: BTreeSet<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Universe {
    pub fn validate(&self) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::InvalidUniverse("no instruments".into()));
        }
        if self.start >= self.end {
            return Err(Error::InvalidUniverse(format!(
                "start {} is not before end {}",
                self.start, self.end
            )));
        }
        if self.market_code.trim().is_empty() {
            return Err(Error::InvalidUniverse("empty market code".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let universe: Universe =
            toml::from_str(text).map_err(|e| Error::InvalidUniverse(e.to_string()))?;
        universe.validate()?;
        Ok(universe)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("universe serializes to toml")
    }
}

/// Sessions on which a market traded, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    market_code: String,
    sessions: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(market_code: impl Into<String>, sessions: BTreeSet<NaiveDate>) -> Self {
        TradingCalendar {
            market_code: market_code.into(),
            sessions: sessions.into_iter().collect(),
        }
    }

    pub fn market_code(&self) -> &str {
        &self.market_code
    }

    pub fn sessions(&self) -> &[NaiveDate] {
        &self.sessions
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.sessions.binary_search(&date).ok()
    }
}

/// Union of every date observed across `series_set`.
pub fn build_calendar(market_code: &str, series_set: &[PriceSeries]) -> Result<TradingCalendar> {
    if series_set.is_empty() {
        return Err(Error::EmptyCalendar);
    }
    let sessions: BTreeSet<NaiveDate> = series_set.iter().flat_map(|s| s.dates()).collect();
    Ok(TradingCalendar::new(market_code, sessions))
}

/// A series laid onto a calendar: one slot per session, `None` where the
/// instrument did not trade. Prices are never forward-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    instrument_id: String,
    slots: Vec<Option<Bar>>,
}

impl AlignedSeries {
    pub fn instrument_id(&self) -> &str {
        &self.instrument_id
    }

    pub fn slots(&self) -> &[Option<Bar>] {
        &self.slots
    }

    pub fn bar(&self, session: usize) -> Option<&Bar> {
        self.slots.get(session).and_then(Option::as_ref)
    }

    pub fn observed_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.slots.len() - self.observed_count()
    }

    /// Observed bars paired with their session index.
    pub fn observed(&self) -> impl Iterator<Item = (usize, &Bar)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|b| (i, b)))
    }

    /// Drops the missing markers.
    pub fn to_series(&self) -> PriceSeries {
        PriceSeries {
            instrument_id: self.instrument_id.clone(),
            bars: self.slots.iter().flatten().copied().collect(),
        }
    }
}

pub fn align(series: &PriceSeries, calendar: &TradingCalendar) -> Result<AlignedSeries> {
    let mut slots = vec![None; calendar.len()];
    for bar in series.bars() {
        let idx = calendar.index_of(bar.date).ok_or_else(|| Error::NotInCalendar {
            instrument: series.instrument_id().to_string(),
            date: bar.date,
        })?;
        slots[idx] = Some(*bar);
    }
    Ok(AlignedSeries {
        instrument_id: series.instrument_id().to_string(),
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, day).unwrap()
    }

    fn flat(day: u32, px: f64) -> Bar {
        Bar::new(d(day), px, px, px, px, 100.0).unwrap()
    }

    fn series(id: &str, days: &[u32]) -> PriceSeries {
        PriceSeries::new(id, days.iter().map(|&x| flat(x, 10.0)).collect()).unwrap()
    }

    #[test]
    fn bar_rejects_bad_ranges() {
        assert!(Bar::new(d(1), 10.0, 11.0, 9.0, 10.5, 0.0).is_ok());
        assert!(Bar::new(d(1), 10.0, 11.0, 10.2, 10.5, 0.0).is_err());
        assert!(Bar::new(d(1), 10.0, 10.4, 9.0, 10.5, 0.0).is_err());
        assert!(Bar::new(d(1), 10.0, 11.0, 9.0, 0.0, 0.0).is_err());
        assert!(Bar::new(d(1), 10.0, 11.0, 9.0, 10.0, -1.0).is_err());
        assert!(Bar::new(d(1), f64::NAN, 11.0, 9.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn series_requires_strictly_increasing_dates() {
        assert!(PriceSeries::new("A", vec![flat(2, 1.0), flat(1, 1.0)]).is_err());
        assert!(PriceSeries::new("A", vec![flat(1, 1.0), flat(1, 1.0)]).is_err());
    }

    #[test]
    fn calendar_is_union() {
        let cal = build_calendar("T", &[series("A", &[1, 2]), series("B", &[2, 3])]).unwrap();
        assert_eq!(cal.sessions(), &[d(1), d(2), d(3)]);
        let one = build_calendar("T", &[series("A", &[4, 9])]).unwrap();
        assert_eq!(one.sessions(), &[d(4), d(9)]);
        assert!(matches!(build_calendar("T", &[]), Err(Error::EmptyCalendar)));
    }

    #[test]
    fn align_marks_missing_sessions() {
        let cal = build_calendar("T", &[series("A", &(1..=10).collect::<Vec<_>>())]).unwrap();
        let b = series("B", &[1, 2, 4, 5, 7, 8, 10]);
        let aligned = align(&b, &cal).unwrap();
        assert_eq!(aligned.slots().len(), 10);
        assert_eq!(aligned.observed_count(), 7);
        assert_eq!(aligned.missing_count(), 3);
        let missing: Vec<usize> = aligned
            .slots()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(missing, vec![2, 5, 8]);
    }

    #[test]
    fn align_rejects_dates_outside_calendar() {
        let cal = build_calendar("T", &[series("A", &[1, 2])]).unwrap();
        let err = align(&series("B", &[1, 3]), &cal).unwrap_err();
        assert!(matches!(err, Error::NotInCalendar { .. }));
    }

    #[test]
    fn align_identity_and_idempotence() {
        let a = series("A", &[1, 2, 3]);
        let cal = build_calendar("T", std::slice::from_ref(&a)).unwrap();
        let once = align(&a, &cal).unwrap();
        assert_eq!(once.to_series(), a);
        let twice = align(&once.to_series(), &cal).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn universe_validation() {
        let text = r#"
            market_code = "KR"
            index_name = "KOSPI1000"
            instruments = ["005930.KS", "000660.KS"]
            start = "2017-01-02"
            end = "2024-03-29"
        "#;
        let u = Universe::from_toml_str(text).unwrap();
        assert_eq!(u.instruments.len(), 2);
        assert_eq!(Universe::from_toml_str(&u.to_toml_string()).unwrap(), u);

        let empty = text.replace(r#"["005930.KS", "000660.KS"]"#, "[]");
        assert!(Universe::from_toml_str(&empty).is_err());
        let backwards = text.replace("2024-03-29", "2016-01-01");
        assert!(Universe::from_toml_str(&backwards).is_err());
    }
}
