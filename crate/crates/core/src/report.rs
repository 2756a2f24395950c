//! CSV and JSON artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestResult, DailyPnL, LagPoint};
use crate::error::{Error, Result};
use crate::metrics::{cumulative_curve, SummaryStats};
use crate::portfolio::PositionBook;
use crate::signal::{FilteredInstrument, ForecastPanel};

/// Market code -> scheme name -> statistics.
pub type SummaryTable = BTreeMap<String, BTreeMap<String, SummaryStats>>;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = writer(path)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `date,pnl,gross,rog_bps,n_names`
pub fn write_daily_pnl(path: &Path, daily: &[DailyPnL]) -> Result<()> {
    write_rows(
        path,
        &["date", "pnl", "gross", "rog_bps", "n_names"],
        daily.iter().map(|d| {
            [
                d.date.to_string(),
                d.pnl.to_string(),
                d.gross.to_string(),
                d.rog_bps.to_string(),
                d.n_names.to_string(),
            ]
        }),
    )
}

/// `date,cum_rog_bps`
pub fn write_cumulative(path: &Path, result: &BacktestResult) -> Result<()> {
    write_rows(
        path,
        &["date", "cum_rog_bps"],
        cumulative_curve(&result.daily)
            .into_iter()
            .map(|(d, v)| [d.to_string(), v.to_string()]),
    )
}

/// `lag,mean_rog_bps,t_stat`
pub fn write_lag_profile(path: &Path, lags: &[LagPoint]) -> Result<()> {
    write_rows(
        path,
        &["lag", "mean_rog_bps", "t_stat"],
        lags.iter().map(|l| {
            [
                l.lag.to_string(),
                l.mean_rog_bps.to_string(),
                l.t_stat.to_string(),
            ]
        }),
    )
}

/// `date,instrument,close,c_kalman,raw_forecast`
pub fn write_panel(path: &Path, panel: &ForecastPanel) -> Result<()> {
    write_rows(
        path,
        &["date", "instrument", "close", "c_kalman", "raw_forecast"],
        panel.points().map(|p| {
            [
                p.date.to_string(),
                p.instrument_id.clone(),
                p.close.to_string(),
                p.c_kalman.to_string(),
                p.raw_forecast.to_string(),
            ]
        }),
    )
}

/// `date,instrument,zscore,position`
pub fn write_books(path: &Path, books: &BTreeMap<chrono::NaiveDate, PositionBook>) -> Result<()> {
    write_rows(
        path,
        &["date", "instrument", "zscore", "position"],
        books.values().flat_map(|b| {
            b.positions.iter().map(move |(id, pos)| {
                [
                    b.date.to_string(),
                    id.clone(),
                    b.zscores.get(id).copied().unwrap_or(f64::NAN).to_string(),
                    pos.to_string(),
                ]
            })
        }),
    )
}

/// `date,x_prior,P_prior,y,S,K,x_post,P_post` for one instrument.
pub fn write_filter_steps(path: &Path, filtered: &FilteredInstrument) -> Result<()> {
    write_rows(
        path,
        &["date", "x_prior", "P_prior", "y", "S", "K", "x_post", "P_post"],
        filtered.dates.iter().zip(&filtered.steps).map(|(d, s)| {
            [
                d.to_string(),
                s.x_prior.to_string(),
                s.p_prior.to_string(),
                s.innovation.to_string(),
                s.innovation_var.to_string(),
                s.gain.to_string(),
                s.x_post.to_string(),
                s.p_post.to_string(),
            ]
        }),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<SummaryTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub market: String,
    pub scheme: String,
    #[serde(flatten)]
    pub stats: SummaryStats,
}

/// Merges several `summary.json` tables. A market appearing in more than
/// one table is an error.
pub fn merge_summaries(tables: &[SummaryTable]) -> Result<SummaryTable> {
    let mut merged = SummaryTable::new();
    for table in tables {
        for (market, schemes) in table {
            if merged.insert(market.clone(), schemes.clone()).is_some() {
                return Err(Error::DuplicateInstrument(format!("market {market}")));
            }
        }
    }
    Ok(merged)
}

pub fn comparison_rows(table: &SummaryTable) -> Vec<ComparisonRow> {
    table
        .iter()
        .flat_map(|(market, schemes)| {
            schemes.iter().map(move |(scheme, stats)| ComparisonRow {
                market: market.clone(),
                scheme: scheme.clone(),
                stats: *stats,
            })
        })
        .collect()
}

/// `market,scheme,mean_rog_bps,sharpe_annualized,t_stat,n_days,max_drawdown_bps,cum_rog_bps`
pub fn write_comparison<W: std::io::Write>(out: W, table: &SummaryTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e| Error::Csv {
        path: "<comparison>".into(),
        source: e,
    };
    w.write_record([
        "market",
        "scheme",
        "mean_rog_bps",
        "sharpe_annualized",
        "t_stat",
        "n_days",
        "max_drawdown_bps",
        "cum_rog_bps",
    ])
    .map_err(err)?;
    for row in comparison_rows(table) {
        let s = row.stats;
        w.write_record([
            row.market,
            row.scheme,
            s.mean_rog_bps.to_string(),
            s.sharpe_annualized.to_string(),
            s.t_stat.to_string(),
            s.n_days.to_string(),
            s.max_drawdown_bps.to_string(),
            s.cum_rog_bps.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<comparison>", e))
}
