//! Config -> data -> filter -> forecasts -> books -> backtests -> artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{lag_profile, run_backtest, BacktestResult, ExecutionScheme, LagPoint, Market};
use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::market_data::{
    align, build_calendar, fetch_remote, parse_csv, HttpTransport, LoadReport, LoadedSeries,
    PriceSeries, RemoteSource, Transport, Universe,
};
use crate::portfolio::{rebalance_schedule, PositionBook};
use crate::report::{self, SummaryTable};
use crate::signal::{filter_instrument, forecast_panel, FilteredInstrument, ForecastPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentRecord {
    pub instrument_id: String,
    pub path: PathBuf,
    pub sha256: String,
    #[serde(flatten)]
    pub load: LoadReport,
    pub bars_in_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub engine_version: String,
    pub config: RunConfig,
    pub universe: Universe,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub sessions: usize,
    pub books: usize,
    pub instruments: Vec<InstrumentRecord>,
}

/// The computed stages of one market's backtest.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub market: Market,
    pub filtered: Vec<FilteredInstrument>,
    pub panel: ForecastPanel,
    pub books: BTreeMap<NaiveDate, PositionBook>,
    pub results: Vec<BacktestResult>,
    pub lags: Vec<LagPoint>,
}

impl Simulation {
    pub fn result(&self, scheme: ExecutionScheme) -> Option<&BacktestResult> {
        self.results.iter().find(|r| r.scheme == scheme)
    }

    pub fn summary_table(&self, market_code: &str) -> SummaryTable {
        let per_scheme = self
            .results
            .iter()
            .map(|r| (r.scheme.name().to_string(), r.summary))
            .collect();
        [(market_code.to_string(), per_scheme)].into()
    }
}

/// Everything a run computes, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub simulation: Simulation,
    pub metadata: RunMetadata,
}

impl RunOutputs {
    pub fn summary_table(&self) -> SummaryTable {
        self.simulation
            .summary_table(&self.metadata.config.market_code)
    }
}

/// Calendar, alignment, filtering, forecasts, books, backtests and the lag
/// profile for in-memory series. Series should already be cut to the
/// window of interest.
pub fn simulate(config: &RunConfig, series: &[PriceSeries]) -> Result<Simulation> {
    config.validate()?;
    let calendar = build_calendar(&config.market_code, series)?;
    if calendar.is_empty() {
        return Err(Error::EmptyInput("no bars inside the date window"));
    }
    let aligned = series
        .par_iter()
        .map(|s| align(s, &calendar))
        .collect::<Result<Vec<_>>>()?;
    let filter_cfg = config.filter_config();
    let filtered = aligned
        .par_iter()
        .map(|a| filter_instrument(a, &calendar, &filter_cfg))
        .collect::<Result<Vec<_>>>()?;
    let panel = forecast_panel(&filtered, &config.signal_config())?;
    let books = rebalance_schedule(&panel, &config.portfolio);
    info!(
        "{}: {} instruments, {} sessions, {} forecasts, {} books",
        config.market_code,
        series.len(),
        calendar.len(),
        panel.len(),
        books.len()
    );
    let market = Market::new(calendar, aligned)?;

    let results = config
        .schemes
        .iter()
        .map(|&s| run_backtest(&books, &market, s, config.periods_per_year))
        .collect::<Result<Vec<_>>>()?;
    let lags = lag_profile(&books, &market, config.max_lag)?;
    Ok(Simulation {
        market,
        filtered,
        panel,
        books,
        results,
        lags,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn record_for(loaded: &LoadedSeries, path: &Path, bytes: &[u8]) -> InstrumentRecord {
    InstrumentRecord {
        instrument_id: loaded.series.instrument_id().to_string(),
        path: path.to_path_buf(),
        sha256: sha256_hex(bytes),
        load: loaded.report.clone(),
        bars_in_window: 0,
    }
}

fn load_local(dir: &Path, id: &str) -> Result<(LoadedSeries, InstrumentRecord)> {
    let path = dir.join(format!("{id}.csv"));
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let loaded = parse_csv(bytes.as_slice(), id, &path)?;
    let record = record_for(&loaded, &path, &bytes);
    Ok((loaded, record))
}

fn window(config: &RunConfig, universe: &Universe) -> Result<(NaiveDate, NaiveDate)> {
    let (mut start, mut end) = (universe.start, universe.end);
    if let Some(r) = config.date_range {
        start = start.max(r.start);
        end = end.min(r.end);
    }
    if start >= end {
        return Err(Error::Config(format!(
            "date range {start}..{end} is empty after intersecting with the universe"
        )));
    }
    Ok((start, end))
}

pub fn remote_source(config: &RunConfig) -> Option<RemoteSource> {
    match &config.data {
        DataSource::Remote {
            url_template,
            cache_dir,
            initial_backoff_ms,
        } => Some(RemoteSource {
            url_template: url_template.clone(),
            cache_dir: cache_dir.clone(),
            market: config.market_code.clone(),
            initial_backoff: Duration::from_millis(*initial_backoff_ms),
        }),
        DataSource::Local { .. } => None,
    }
}

/// Populates the cache for every instrument of the universe.
pub fn fetch_all<T: Transport + ?Sized>(
    config: &RunConfig,
    universe: &Universe,
    transport: &T,
) -> Result<Vec<(LoadedSeries, InstrumentRecord)>> {
    let source = remote_source(config)
        .ok_or_else(|| Error::Config("`fetch` needs a remote data source".into()))?;
    universe
        .instruments
        .iter()
        .map(|id| {
            let loaded = fetch_remote(id, universe.start, universe.end, &source, transport)?;
            let path = source.cache_path(id);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let record = record_for(&loaded, &path, &bytes);
            Ok((loaded, record))
        })
        .collect()
}

fn load_all(config: &RunConfig, universe: &Universe) -> Result<Vec<(LoadedSeries, InstrumentRecord)>> {
    match &config.data {
        DataSource::Local { dir } => universe
            .instruments
            .par_iter()
            .map(|id| load_local(dir, id))
            .collect(),
        DataSource::Remote { .. } => fetch_all(config, universe, &HttpTransport::default()),
    }
}

/// Runs the whole pipeline in memory.
pub fn execute(config: &RunConfig) -> Result<RunOutputs> {
    config.validate()?;
    let universe = Universe::load(&config.universe)?;
    if universe.market_code != config.market_code {
        warn!(
            "universe market `{}` differs from configured `{}`",
            universe.market_code, config.market_code
        );
    }
    let (start, end) = window(config, &universe)?;

    let loaded = load_all(config, &universe)?;
    let mut records = Vec::with_capacity(loaded.len());
    let mut series: Vec<PriceSeries> = Vec::with_capacity(loaded.len());
    for (l, mut rec) in loaded {
        let s = l.series.restrict(start, end);
        rec.bars_in_window = s.len();
        if s.is_empty() {
            warn!("{}: no bars inside {start}..{end}", s.instrument_id());
        }
        records.push(rec);
        series.push(s);
    }

    let simulation = simulate(config, &series)?;

    let metadata = RunMetadata {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        universe,
        window_start: start,
        window_end: end,
        sessions: simulation.market.calendar().len(),
        books: simulation.books.len(),
        instruments: records,
    };
    Ok(RunOutputs {
        simulation,
        metadata,
    })
}

/// Writes files, deleting whatever was written if any write fails.
struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let result = f(&path);
        self.written.push(path);
        if result.is_err() {
            self.rollback();
        }
        result
    }

    fn rollback(&mut self) {
        for p in self.written.drain(..) {
            let _ = std::fs::remove_file(p);
        }
    }

    fn finish(self) -> Vec<PathBuf> {
        self.written
    }
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
    pub outputs: RunOutputs,
}

/// Full run: every artifact into `config.output_dir`.
pub fn run(config: &RunConfig) -> Result<RunArtifacts> {
    let outputs = execute(config)?;
    let sim = &outputs.simulation;
    let mut w = ArtifactWriter::new(&config.output_dir)?;
    for r in &sim.results {
        w.write(&format!("daily_pnl_{}.csv", r.scheme), |p| {
            report::write_daily_pnl(p, &r.daily)
        })?;
        w.write(&format!("cumulative_{}.csv", r.scheme), |p| {
            report::write_cumulative(p, r)
        })?;
    }
    w.write("lag_profile.csv", |p| report::write_lag_profile(p, &sim.lags))?;
    w.write("summary.json", |p| report::write_json(p, &outputs.summary_table()))?;
    w.write("run_metadata.json", |p| report::write_json(p, &outputs.metadata))?;
    if config.debug_dumps {
        w.write("panel.csv", |p| report::write_panel(p, &sim.panel))?;
        w.write("books.csv", |p| report::write_books(p, &sim.books))?;
        let steps_dir = config.output_dir.join("filter_steps");
        std::fs::create_dir_all(&steps_dir).map_err(|e| Error::io(&steps_dir, e))?;
        for f in &sim.filtered {
            w.write(&format!("filter_steps/{}.csv", f.instrument_id), |p| {
                report::write_filter_steps(p, f)
            })?;
        }
    }
    Ok(RunArtifacts {
        files: w.finish(),
        outputs,
    })
}

/// Lag profile only: writes `lag_profile.csv`.
pub fn run_lag_profile(config: &RunConfig) -> Result<(PathBuf, Vec<LagPoint>)> {
    let outputs = execute(config)?;
    let mut w = ArtifactWriter::new(&config.output_dir)?;
    let lags = outputs.simulation.lags;
    w.write("lag_profile.csv", |p| report::write_lag_profile(p, &lags))?;
    Ok((w.finish().remove(0), lags))
}
