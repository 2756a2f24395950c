//! Daily PnL of the position books under the three execution timings.
//!
//! A book formed from the close of session `T` is held over:
//!
//! | scheme  | entry          | exit           | PnL dated |
//! |---------|----------------|----------------|-----------|
//! | `exec1` | open of `T+1`  | open of `T+2`  | `T+2`     |
//! | `exec2` | close of `T`   | close of `T+1` | `T+1`     |
//! | `exec3` | open of `T+1`  | close of `T+1` | `T+1`     |
//!
//! Sessions are counted on the market calendar. An instrument without a bar
//! on a required session is dropped from that day's book and gross is
//! recomputed over the names that remain.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{AlignedSeries, Bar, TradingCalendar};
use crate::metrics::{summarize, summarize_rog, SummaryStats};
use crate::portfolio::PositionBook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExecutionScheme {
    #[serde(rename = "exec1")]
    Exec1OpenToOpen,
    #[serde(rename = "exec2")]
    Exec2CloseToClose,
    #[serde(rename = "exec3")]
    Exec3OpenToClose,
}

impl ExecutionScheme {
    pub const ALL: [ExecutionScheme; 3] = [
        ExecutionScheme::Exec1OpenToOpen,
        ExecutionScheme::Exec2CloseToClose,
        ExecutionScheme::Exec3OpenToClose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExecutionScheme::Exec1OpenToOpen => "exec1",
            ExecutionScheme::Exec2CloseToClose => "exec2",
            ExecutionScheme::Exec3OpenToClose => "exec3",
        }
    }

    fn leg(self) -> Leg {
        match self {
            ExecutionScheme::Exec1OpenToOpen => Leg::new((1, Print::Open), (2, Print::Open)),
            ExecutionScheme::Exec2CloseToClose => Leg::new((0, Print::Close), (1, Print::Close)),
            ExecutionScheme::Exec3OpenToClose => Leg::new((1, Print::Open), (1, Print::Close)),
        }
    }
}

impl fmt::Display for ExecutionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExecutionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exec1" => Ok(ExecutionScheme::Exec1OpenToOpen),
            "exec2" => Ok(ExecutionScheme::Exec2CloseToClose),
            "exec3" => Ok(ExecutionScheme::Exec3OpenToClose),
            other => Err(Error::Config(format!("unknown execution scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Print {
    Open,
    Close,
}

/// Entry and exit prints, as session offsets from the signal session.
#[derive(Debug, Clone, Copy)]
struct Leg {
    entry: (usize, Print),
    exit: (usize, Print),
}

impl Leg {
    fn new(entry: (usize, Print), exit: (usize, Print)) -> Self {
        Leg { entry, exit }
    }

    fn close_to_close(lag: usize) -> Self {
        Leg::new((lag - 1, Print::Close), (lag, Print::Close))
    }

    fn price(bar: &Bar, print: Print) -> f64 {
        match print {
            Print::Open => bar.open,
            Print::Close => bar.close,
        }
    }

    /// Return of the leg for a signal at session `t`; `None` when the
    /// instrument lacks a signal bar or a required bar.
    fn realize(&self, series: &AlignedSeries, t: usize) -> Option<f64> {
        series.bar(t)?;
        let entry = Self::price(series.bar(t + self.entry.0)?, self.entry.1);
        let exit = Self::price(series.bar(t + self.exit.0)?, self.exit.1);
        Some(exit / entry - 1.0)
    }
}

/// A market's calendar with every instrument aligned onto it.
#[derive(Debug, Clone)]
pub struct Market {
    calendar: TradingCalendar,
    series: BTreeMap<String, AlignedSeries>,
}

impl Market {
    pub fn new(calendar: TradingCalendar, series: Vec<AlignedSeries>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in series {
            if s.slots().len() != calendar.len() {
                return Err(Error::Dimension(format!(
                    "`{}` is aligned to {} sessions, calendar has {}",
                    s.instrument_id(),
                    s.slots().len(),
                    calendar.len()
                )));
            }
            let id = s.instrument_id().to_string();
            if map.insert(id.clone(), s).is_some() {
                return Err(Error::DuplicateInstrument(id));
            }
        }
        Ok(Market {
            calendar,
            series: map,
        })
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn series(&self, instrument_id: &str) -> Option<&AlignedSeries> {
        self.series.get(instrument_id)
    }

    pub fn instruments(&self) -> impl Iterator<Item = &AlignedSeries> {
        self.series.values()
    }
}

/// Return of one instrument for a signal formed at the close of `signal_date`.
pub fn instrument_return(
    series: &AlignedSeries,
    calendar: &TradingCalendar,
    signal_date: NaiveDate,
    scheme: ExecutionScheme,
) -> Option<f64> {
    scheme.leg().realize(series, calendar.index_of(signal_date)?)
}

/// Close of `T+1` to open of `T+2`: the overnight gap between the `exec3`
/// leg and the end of the `exec1` leg.
pub fn overnight_return(
    series: &AlignedSeries,
    calendar: &TradingCalendar,
    signal_date: NaiveDate,
) -> Option<f64> {
    Leg::new((1, Print::Close), (2, Print::Open)).realize(series, calendar.index_of(signal_date)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyPnL {
    pub date: NaiveDate,
    pub pnl: f64,
    pub gross: f64,
    pub rog_bps: f64,
    pub n_names: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub scheme: ExecutionScheme,
    pub daily: Vec<DailyPnL>,
    pub summary: SummaryStats,
}

fn book_pnl(book: &PositionBook, market: &Market, leg: Leg) -> Option<DailyPnL> {
    let t = market.calendar.index_of(book.date)?;
    let date = *market.calendar.sessions().get(t + leg.exit.0)?;
    let mut pnl = 0.0;
    let mut gross = 0.0;
    let mut n_names = 0;
    for (id, position) in &book.positions {
        let Some(ret) = market.series(id).and_then(|s| leg.realize(s, t)) else {
            continue;
        };
        pnl += position * ret;
        gross += position.abs();
        n_names += 1;
    }
    if n_names == 0 {
        return None;
    }
    let rog_bps = if gross > 0.0 { 1e4 * pnl / gross } else { 0.0 };
    Some(DailyPnL {
        date,
        pnl,
        gross,
        rog_bps,
        n_names,
    })
}

fn simulate(books: &BTreeMap<NaiveDate, PositionBook>, market: &Market, leg: Leg) -> Vec<DailyPnL> {
    let books: Vec<&PositionBook> = books.values().collect();
    books
        .par_iter()
        .map(|b| book_pnl(b, market, leg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn run_backtest(
    books: &BTreeMap<NaiveDate, PositionBook>,
    market: &Market,
    scheme: ExecutionScheme,
    periods_per_year: f64,
) -> Result<BacktestResult> {
    if books.is_empty() {
        return Err(Error::EmptyInput("position books"));
    }
    let daily = simulate(books, market, scheme.leg());
    if daily.is_empty() {
        return Err(Error::EmptyInput("no book could be traded"));
    }
    let summary = summarize(&daily, periods_per_year)?;
    Ok(BacktestResult {
        scheme,
        daily,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagPoint {
    pub lag: usize,
    pub mean_rog_bps: f64,
    pub t_stat: f64,
    pub n_days: usize,
}

/// Mean ROG of each book held over the close-to-close move from `T+j-1`
/// to `T+j`, for `j = 1..=max_lag`. Lags with no tradable day are omitted.
pub fn lag_profile(
    books: &BTreeMap<NaiveDate, PositionBook>,
    market: &Market,
    max_lag: usize,
) -> Result<Vec<LagPoint>> {
    if max_lag == 0 {
        return Err(Error::Config("max_lag must be at least 1".into()));
    }
    if books.is_empty() {
        return Err(Error::EmptyInput("position books"));
    }
    let mut out = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let daily = simulate(books, market, Leg::close_to_close(lag));
        if daily.is_empty() {
            warn!("lag {lag}: not enough history, omitted");
            continue;
        }
        let rog: Vec<f64> = daily.iter().map(|d| d.rog_bps).collect();
        let stats = summarize_rog(&rog, 1.0)?;
        out.push(LagPoint {
            lag,
            mean_rog_bps: stats.mean_rog_bps,
            t_stat: stats.t_stat,
            n_days: stats.n_days,
        });
    }
    Ok(out)
}
