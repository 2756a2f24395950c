//! Python bindings for the kfrev backtester.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use kfrev_core::backtest::{ExecutionScheme, LagPoint};
use kfrev_core::config::{DataSource, RunConfig};
use kfrev_core::kalman::{self, ScalarFilterConfig, ScalarStep};
use kfrev_core::metrics::{self, SummaryStats};
use kfrev_core::pipeline::{self, Simulation};
use kfrev_core::portfolio;
use kfrev_core::signal::SignConvention;
use kfrev_core::synthetic::{self, SyntheticSpec};

create_exception!(kfrev, KfrevError, PyException);

fn err(e: kfrev_core::Error) -> PyErr {
    KfrevError::new_err(e.to_string())
}

/// One step of the scalar filter.
#[pyclass(frozen, get_all, skip_from_py_object, module = "kfrev")]
#[derive(Clone)]
struct FilterStep {
    x_prior: f64,
    p_prior: f64,
    innovation: f64,
    innovation_var: f64,
    gain: f64,
    x_post: f64,
    p_post: f64,
    post_fit_residual: f64,
}

impl From<ScalarStep> for FilterStep {
    fn from(s: ScalarStep) -> Self {
        FilterStep {
            x_prior: s.x_prior,
            p_prior: s.p_prior,
            innovation: s.innovation,
            innovation_var: s.innovation_var,
            gain: s.gain,
            x_post: s.x_post,
            p_post: s.p_post,
            post_fit_residual: s.post_fit_residual,
        }
    }
}

#[pymethods]
impl FilterStep {
    fn __repr__(&self) -> String {
        format!(
            "FilterStep(x_post={}, p_post={}, gain={})",
            self.x_post, self.p_post, self.gain
        )
    }
}

/// Summary statistics of a daily return-on-gross series, in basis points.
#[pyclass(frozen, get_all, skip_from_py_object, module = "kfrev")]
#[derive(Clone)]
struct Summary {
    mean_rog_bps: f64,
    sharpe_annualized: f64,
    t_stat: f64,
    n_days: usize,
    max_drawdown_bps: f64,
    cum_rog_bps: f64,
}

impl From<SummaryStats> for Summary {
    fn from(s: SummaryStats) -> Self {
        Summary {
            mean_rog_bps: s.mean_rog_bps,
            sharpe_annualized: s.sharpe_annualized,
            t_stat: s.t_stat,
            n_days: s.n_days,
            max_drawdown_bps: s.max_drawdown_bps,
            cum_rog_bps: s.cum_rog_bps,
        }
    }
}

#[pymethods]
impl Summary {
    fn __repr__(&self) -> String {
        format!(
            "Summary(mean_rog_bps={:.4}, sharpe_annualized={:.3}, t_stat={:.3}, n_days={})",
            self.mean_rog_bps, self.sharpe_annualized, self.t_stat, self.n_days
        )
    }
}

/// Outcome of a backtest: per-scheme summaries, daily ROG and the lag profile.
#[pyclass(frozen, module = "kfrev")]
struct BacktestRun {
    summaries: BTreeMap<String, Summary>,
    daily: BTreeMap<String, Vec<(NaiveDate, f64)>>,
    lags: Vec<(usize, f64, f64)>,
    n_books: usize,
}

impl From<&Simulation> for BacktestRun {
    fn from(sim: &Simulation) -> Self {
        BacktestRun {
            summaries: sim
                .results
                .iter()
                .map(|r| (r.scheme.name().to_string(), r.summary.into()))
                .collect(),
            daily: sim
                .results
                .iter()
                .map(|r| {
                    let rows = r.daily.iter().map(|d| (d.date, d.rog_bps)).collect();
                    (r.scheme.name().to_string(), rows)
                })
                .collect(),
            lags: sim
                .lags
                .iter()
                .map(|l: &LagPoint| (l.lag, l.mean_rog_bps, l.t_stat))
                .collect(),
            n_books: sim.books.len(),
        }
    }
}

#[pymethods]
impl BacktestRun {
    /// `{scheme: Summary}` for every scheme that was run.
    #[getter]
    fn summaries(&self) -> BTreeMap<String, Summary> {
        self.summaries.clone()
    }

    /// `(lag, mean_rog_bps, t_stat)` rows.
    #[getter]
    fn lag_profile(&self) -> Vec<(usize, f64, f64)> {
        self.lags.clone()
    }

    #[getter]
    fn n_books(&self) -> usize {
        self.n_books
    }

    /// Daily `(date, rog_bps)` rows for one scheme.
    fn daily(&self, scheme: &str) -> PyResult<Vec<(NaiveDate, f64)>> {
        self.daily
            .get(scheme)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("scheme {scheme} was not run")))
    }

    fn __repr__(&self) -> String {
        format!("BacktestRun(schemes={:?}, n_books={})", self.summaries.keys().collect::<Vec<_>>(), self.n_books)
    }
}

/// Runs the local-level filter over a price list.
#[pyfunction]
#[pyo3(signature = (prices, q=1.0, r=1.0, p0=1e4))]
fn filter_series(prices: Vec<f64>, q: f64, r: f64, p0: f64) -> PyResult<Vec<FilterStep>> {
    let steps = kalman::filter_series(&prices, &ScalarFilterConfig { q, r, p0 }).map_err(err)?;
    Ok(steps.into_iter().map(FilterStep::from).collect())
}

/// Limit of the scalar gain for noise variances `q` and `r`.
#[pyfunction]
#[pyo3(signature = (q=1.0, r=1.0))]
fn steady_state_gain(q: f64, r: f64) -> PyResult<f64> {
    kalman::steady_state_gain(q, r).map_err(err)
}

/// `-(close - fair) / mean(close, fair)`; `sign="literal"` drops the minus.
#[pyfunction]
#[pyo3(signature = (close, fair_value, sign="reversal"))]
fn forecast(close: f64, fair_value: f64, sign: &str) -> PyResult<f64> {
    let convention = match sign {
        "reversal" => SignConvention::Reversal,
        "literal" => SignConvention::Literal,
        other => return Err(PyValueError::new_err(format!("unknown sign convention {other}"))),
    };
    convention.forecast(close, fair_value).map_err(err)
}

/// Cross-sectional z-scores (population sd). Empty when there is no dispersion.
#[pyfunction]
#[pyo3(signature = (forecasts, clip=None))]
fn normalize_cross_section(forecasts: BTreeMap<String, f64>, clip: Option<f64>) -> BTreeMap<String, f64> {
    match clip {
        Some(c) => portfolio::normalize_with_clip(&forecasts, Some(c)),
        None => portfolio::normalize_cross_section(&forecasts),
    }
}

/// Dollar positions `gross * z / sum|z|`.
#[pyfunction]
#[pyo3(signature = (date, zscores, gross_target=1e6))]
fn build_positions(date: NaiveDate, zscores: BTreeMap<String, f64>, gross_target: f64) -> PyResult<BTreeMap<String, f64>> {
    Ok(portfolio::build_positions(date, &zscores, gross_target).map_err(err)?.positions)
}

/// Summary of a daily ROG series in basis points.
#[pyfunction]
#[pyo3(signature = (rog_bps, periods_per_year=252.0))]
fn summarize(rog_bps: Vec<f64>, periods_per_year: f64) -> PyResult<Summary> {
    Ok(metrics::summarize_rog(&rog_bps, periods_per_year).map_err(err)?.into())
}

fn synthetic_spec(generator: &str, n_instruments: usize, n_days: usize, half_life: f64, seed: u64) -> PyResult<SyntheticSpec> {
    match generator {
        "ou" => Ok(SyntheticSpec::ou(n_instruments, n_days, half_life, seed)),
        "random_walk" | "random-walk" => Ok(SyntheticSpec::random_walk(n_instruments, n_days, seed)),
        other => Err(PyValueError::new_err(format!("unknown generator {other}"))),
    }
}

/// Writes a synthetic market (one CSV per instrument plus `universe.toml`)
/// and returns the universe path.
#[pyfunction]
#[pyo3(signature = (output_dir, generator="ou", n_instruments=50, n_days=2000, half_life=3.0, seed=1, market="SYN"))]
fn generate_synthetic(
    output_dir: PathBuf,
    generator: &str,
    n_instruments: usize,
    n_days: usize,
    half_life: f64,
    seed: u64,
    market: &str,
) -> PyResult<PathBuf> {
    let spec = synthetic_spec(generator, n_instruments, n_days, half_life, seed)?;
    synthetic::generate_synthetic(&spec, market, &output_dir).map_err(err)?;
    Ok(output_dir.join("universe.toml"))
}

/// Backtests an in-memory synthetic market without touching disk.
#[pyfunction]
#[pyo3(signature = (generator="ou", n_instruments=50, n_days=2000, half_life=3.0, seed=1, q=1.0, r=1.0, warmup=20, max_lag=10, gross_target=1e6))]
#[allow(clippy::too_many_arguments)]
fn backtest_synthetic(
    py: Python<'_>,
    generator: &str,
    n_instruments: usize,
    n_days: usize,
    half_life: f64,
    seed: u64,
    q: f64,
    r: f64,
    warmup: usize,
    max_lag: usize,
    gross_target: f64,
) -> PyResult<BacktestRun> {
    let spec = synthetic_spec(generator, n_instruments, n_days, half_life, seed)?;
    let mut cfg = RunConfig::new("SYN", "universe.toml", DataSource::Local { dir: ".".into() }, "out");
    cfg.filter.q = q;
    cfg.filter.r = r;
    cfg.filter.warmup = warmup;
    cfg.max_lag = max_lag;
    cfg.portfolio.gross_target = gross_target;
    cfg.seed = Some(seed);
    py.detach(|| {
        let series = synthetic::generate_series(&spec)?;
        pipeline::simulate(&cfg, &series)
    })
    .map(|sim| BacktestRun::from(&sim))
    .map_err(err)
}

/// Runs a full backtest from a TOML config (or a previous
/// `run_metadata.json`) and writes its artifacts.
#[pyfunction]
#[pyo3(signature = (config_path, output_dir=None))]
fn run_backtest(py: Python<'_>, config_path: PathBuf, output_dir: Option<PathBuf>) -> PyResult<BacktestRun> {
    let mut cfg = RunConfig::load(&config_path).map_err(err)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let art = py.detach(|| pipeline::run(&cfg)).map_err(err)?;
    Ok(BacktestRun::from(&art.outputs.simulation))
}

/// Names of the execution schemes, in run order.
#[pyfunction]
fn schemes() -> Vec<&'static str> {
    ExecutionScheme::ALL.iter().map(|s| s.name()).collect()
}

#[pymodule]
fn kfrev(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("KfrevError", m.py().get_type::<KfrevError>())?;
    m.add_class::<FilterStep>()?;
    m.add_class::<Summary>()?;
    m.add_class::<BacktestRun>()?;
    m.add_function(wrap_pyfunction!(filter_series, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_gain, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_cross_section, m)?)?;
    m.add_function(wrap_pyfunction!(build_positions, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(backtest_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    m.add_function(wrap_pyfunction!(schemes, m)?)?;
    Ok(())
}
