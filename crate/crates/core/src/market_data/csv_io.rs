use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use super::{Bar, PriceSeries, MAX_SKIPPED_FRACTION};
use crate::error::{Error, Result};

/// Which close column fed the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceBasis {
    /// `Adj Close` was present; open/high/low were scaled by the same factor.
    Adjusted,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_total: usize,
    pub rows_skipped: usize,
    pub reordered: bool,
    pub price_basis: PriceBasis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub series: PriceSeries,
    pub report: LoadReport,
}

struct Columns {
    date: usize,
    open: usize,
    high: usize,
    low: usize,
    close: usize,
    adj_close: Option<usize>,
    volume: usize,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &'static str| {
            header
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
        };
        let need = |name: &'static str| find(name).ok_or(Error::MissingColumn(name));
        Ok(Columns {
            date: need("Date")?,
            open: need("Open")?,
            high: need("High")?,
            low: need("Low")?,
            close: need("Close")?,
            adj_close: find("Adj Close"),
            volume: need("Volume")?,
        })
    }
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> Option<Bar> {
    let num = |idx: usize| -> Option<f64> { row.get(idx)?.trim().parse::<f64>().ok() };
    let date = NaiveDate::parse_from_str(row.get(cols.date)?.trim(), "%Y-%m-%d").ok()?;
    let (mut open, mut high, mut low, mut close) =
        (num(cols.open)?, num(cols.high)?, num(cols.low)?, num(cols.close)?);
    let volume = num(cols.volume)?;
    if let Some(adj_idx) = cols.adj_close {
        let adj = num(adj_idx)?;
        if !(close.is_finite() && close > 0.0 && adj.is_finite() && adj > 0.0) {
            return None;
        }
        let factor = adj / close;
        open *= factor;
        high *= factor;
        low *= factor;
        close = adj;
    }
    Bar::new(date, open, high, low, close, volume).ok()
}

/// Parses daily bars from `Date,Open,High,Low,Close[,Adj Close],Volume` CSV.
///
/// Malformed or invalid rows are skipped and counted; more than 5% skipped
/// aborts. Out-of-order rows are sorted with a warning. A repeated date is
/// an error.
pub fn parse_csv<R: Read>(reader: R, instrument_id: &str, source: &Path) -> Result<LoadedSeries> {
    let csv_err = |e| Error::Csv {
        path: source.to_path_buf(),
        source: e,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let cols = Columns::from_header(rdr.headers().map_err(csv_err)?)?;

    let mut bars = Vec::new();
    let mut rows_total = 0usize;
    let mut rows_skipped = 0usize;
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rows_total += 1;
        match parse_row(&row, &cols) {
            Some(bar) => bars.push(bar),
            None => rows_skipped += 1,
        }
    }

    if rows_total == 0 || bars.is_empty() {
        return Err(Error::EmptySeries(instrument_id.to_string()));
    }
    if rows_skipped as f64 > MAX_SKIPPED_FRACTION * rows_total as f64 {
        return Err(Error::TooManySkipped {
            instrument: instrument_id.to_string(),
            skipped: rows_skipped,
            total: rows_total,
        });
    }
    if rows_skipped > 0 {
        warn!("{instrument_id}: skipped {rows_skipped} of {rows_total} malformed rows");
    }

    let reordered = bars.windows(2).any(|w| w[1].date < w[0].date);
    if reordered {
        warn!("{instrument_id}: rows out of date order, re-sorting");
        bars.sort_by_key(|b| b.date);
    }
    if let Some(dup) = bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::DuplicateDate {
            instrument: instrument_id.to_string(),
            date: dup[0].date,
        });
    }

    Ok(LoadedSeries {
        series: PriceSeries::new(instrument_id, bars)?,
        report: LoadReport {
            rows_total,
            rows_skipped,
            reordered,
            price_basis: if cols.adj_close.is_some() {
                PriceBasis::Adjusted
            } else {
                PriceBasis::Raw
            },
        },
    })
}

pub fn load_csv(path: &Path, instrument_id: &str) -> Result<LoadedSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(std::io::BufReader::new(file), instrument_id, path)
}

/// Writes bars in the same schema `load_csv` reads (without `Adj Close`).
pub fn write_csv(series: &PriceSeries, path: &Path) -> Result<()> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["Date", "Open", "High", "Low", "Close", "Volume"])
        .map_err(csv_err)?;
    for b in series.bars() {
        w.write_record([
            b.date.format("%Y-%m-%d").to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
