//! Run configuration, read from TOML.
//!
//! ```toml
//! market_code = "KR"
//! universe = "universe.toml"
//! output_dir = "out/KR"
//! schemes = ["exec1", "exec2", "exec3"]
//! max_lag = 10
//!
//! [data]
//! source = "local"
//! dir = "data/KR"
//!
//! [filter]
//! q = 1.0
//! r = 1.0
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::ExecutionScheme;
use crate::error::{Error, Result};
use crate::kalman::ScalarFilterConfig;
use crate::metrics::DEFAULT_PERIODS_PER_YEAR;
use crate::portfolio::PortfolioConfig;
use crate::signal::{FairValue, SignConvention, SignalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// `<dir>/<instrument>.csv`
    Local { dir: PathBuf },
    /// Downloads into `<cache_dir>/<market>/<instrument>.csv`.
    Remote {
        url_template: String,
        cache_dir: PathBuf,
        #[serde(default = "default_backoff_ms")]
        initial_backoff_ms: u64,
    },
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSection {
    pub q: f64,
    pub r: f64,
    pub p0: f64,
    pub warmup: usize,
    pub fair_value: FairValue,
}

impl Default for FilterSection {
    fn default() -> Self {
        let k = ScalarFilterConfig::default();
        FilterSection {
            q: k.q,
            r: k.r,
            p0: k.p0,
            warmup: SignalConfig::default().warmup,
            fair_value: FairValue::Posterior,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalSection {
    pub sign: SignConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market_code: String,
    pub universe: PathBuf,
    pub data: DataSource,
    /// Narrows the universe's own window when set.
    #[serde(default)]
    pub date_range: Option<DateRange>,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub signal: SignalSection,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<ExecutionScheme>,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    #[serde(default = "default_ppy")]
    pub periods_per_year: f64,
    pub output_dir: PathBuf,
    /// Also write the forecast panel, position books and filter steps.
    #[serde(default)]
    pub debug_dumps: bool,
    /// Recorded in metadata; only synthetic runs consume it.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn all_schemes() -> Vec<ExecutionScheme> {
    ExecutionScheme::ALL.to_vec()
}

fn default_max_lag() -> usize {
    10
}

fn default_ppy() -> f64 {
    DEFAULT_PERIODS_PER_YEAR
}

impl RunConfig {
    /// Defaults for everything but the market, universe, data and output.
    pub fn new(
        market_code: impl Into<String>,
        universe: impl Into<PathBuf>,
        data: DataSource,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            market_code: market_code.into(),
            universe: universe.into(),
            data,
            date_range: None,
            filter: FilterSection::default(),
            signal: SignalSection::default(),
            portfolio: PortfolioConfig::default(),
            schemes: all_schemes(),
            max_lag: default_max_lag(),
            periods_per_year: default_ppy(),
            output_dir: output_dir.into(),
            debug_dumps: false,
            seed: None,
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    /// Reads a TOML config, or the config echoed into a previous run's
    /// `run_metadata.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if path.extension().is_some_and(|e| e == "json") {
            let meta: serde_json::Value = serde_json::from_str(&text)?;
            let echoed = meta
                .get("config")
                .ok_or_else(|| Error::Config("metadata has no `config` entry".into()))?;
            let mut cfg: RunConfig = serde_json::from_value(echoed.clone())?;
            cfg.resolve_paths(base);
            return Ok(cfg);
        }
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.universe);
        fix(&mut self.output_dir);
        match &mut self.data {
            DataSource::Local { dir } => fix(dir),
            DataSource::Remote { cache_dir, .. } => fix(cache_dir),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let f = &self.filter;
        if !(f.q >= 0.0 && f.q.is_finite()) {
            return bad(format!("filter.q must be >= 0, got {}", f.q));
        }
        if !(f.r > 0.0 && f.r.is_finite()) {
            return bad(format!("filter.r must be > 0, got {}", f.r));
        }
        if !(f.p0 > 0.0 && f.p0.is_finite()) {
            return bad(format!("filter.p0 must be > 0, got {}", f.p0));
        }
        if f.warmup < 1 {
            return bad("filter.warmup must be >= 1".into());
        }
        if self.max_lag < 1 {
            return bad("max_lag must be >= 1".into());
        }
        let g = self.portfolio.gross_target;
        if !(g > 0.0 && g.is_finite()) {
            return bad(format!("portfolio.gross_target must be > 0, got {g}"));
        }
        if let Some(c) = self.portfolio.clip_zscore {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("portfolio.clip_zscore must be > 0, got {c}"));
            }
        }
        if self.schemes.is_empty() {
            return bad("at least one execution scheme is required".into());
        }
        if self.schemes.iter().collect::<BTreeSet<_>>().len() != self.schemes.len() {
            return bad("execution schemes are repeated".into());
        }
        if !(self.periods_per_year > 0.0 && self.periods_per_year.is_finite()) {
            return bad("periods_per_year must be > 0".into());
        }
        if self.market_code.trim().is_empty() {
            return bad("market_code is empty".into());
        }
        if let Some(r) = self.date_range {
            if r.start >= r.end {
                return bad(format!("date_range start {} is not before end {}", r.start, r.end));
            }
        }
        Ok(())
    }

    pub fn filter_config(&self) -> ScalarFilterConfig {
        ScalarFilterConfig {
            q: self.filter.q,
            r: self.filter.r,
            p0: self.filter.p0,
        }
    }

    pub fn signal_config(&self) -> SignalConfig {
        SignalConfig {
            warmup: self.filter.warmup,
            fair_value: self.filter.fair_value,
            sign: self.signal.sign,
        }
    }
}
