use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use kfrev_core::backtest::ExecutionScheme;
use kfrev_core::config::{DataSource, RunConfig};
use kfrev_core::market_data::{HttpTransport, Universe};
use kfrev_core::pipeline;
use kfrev_core::report;
use kfrev_core::signal::{FairValue, SignConvention};
use kfrev_core::synthetic::{generate_synthetic, reversion_rate_from_half_life, Generator, SyntheticSpec};
use kfrev_core::Result;

#[derive(Parser)]
#[command(name = "kfrev", version, about = "Kalman-filter reversal backtester")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download every instrument of the universe into the cache.
    Fetch(RunArgs),
    /// Full pipeline: PnL per scheme, lag profile, summary and metadata.
    Backtest(RunArgs),
    /// Only the T+1..T+J lag profile.
    LagProfile(RunArgs),
    /// Write a seeded synthetic universe.
    Synth(SynthArgs),
    /// Merge summary.json files into one table.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Reversal,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum FairValueArg {
    Posterior,
    Prior,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    RandomWalk,
    Ou,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a previous run's run_metadata.json.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    market: Option<String>,
    #[arg(long)]
    universe: Option<PathBuf>,
    /// Directory of `<instrument>.csv` files.
    #[arg(long, conflicts_with_all = ["url_template", "cache_dir"])]
    data_dir: Option<PathBuf>,
    #[arg(long, requires = "cache_dir")]
    url_template: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, value_enum)]
    fair_value: Option<FairValueArg>,
    #[arg(long, value_enum)]
    sign: Option<SignArg>,
    #[arg(long)]
    gross_target: Option<f64>,
    #[arg(long)]
    clip_zscore: Option<f64>,
    /// Repeat to run several; e.g. `--scheme exec1 --scheme exec2`.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long)]
    periods_per_year: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    debug_dumps: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let missing = |what: &str| {
                    kfrev_core::Error::Config(format!("--{what} is required without --config"))
                };
                let data = match (&self.data_dir, &self.url_template, &self.cache_dir) {
                    (Some(dir), _, _) => DataSource::Local { dir: dir.clone() },
                    (None, Some(url), Some(cache)) => DataSource::Remote {
                        url_template: url.clone(),
                        cache_dir: cache.clone(),
                        initial_backoff_ms: 500,
                    },
                    _ => return Err(missing("data-dir")),
                };
                RunConfig::new(
                    self.market.clone().ok_or_else(|| missing("market"))?,
                    self.universe.clone().ok_or_else(|| missing("universe"))?,
                    data,
                    self.output_dir.clone().ok_or_else(|| missing("output-dir"))?,
                )
            }
        };
        if self.config.is_some() {
            if let Some(m) = self.market {
                cfg.market_code = m;
            }
            if let Some(u) = self.universe {
                cfg.universe = u;
            }
            if let Some(dir) = self.data_dir {
                cfg.data = DataSource::Local { dir };
            }
            if let (Some(url_template), Some(cache_dir)) = (self.url_template, self.cache_dir) {
                cfg.data = DataSource::Remote {
                    url_template,
                    cache_dir,
                    initial_backoff_ms: 500,
                };
            }
            if let Some(o) = self.output_dir {
                cfg.output_dir = o;
            }
        }
        if let Some(v) = self.q {
            cfg.filter.q = v;
        }
        if let Some(v) = self.r {
            cfg.filter.r = v;
        }
        if let Some(v) = self.p0 {
            cfg.filter.p0 = v;
        }
        if let Some(v) = self.warmup {
            cfg.filter.warmup = v;
        }
        if let Some(v) = self.fair_value {
            cfg.filter.fair_value = match v {
                FairValueArg::Posterior => FairValue::Posterior,
                FairValueArg::Prior => FairValue::Prior,
            };
        }
        if let Some(v) = self.sign {
            cfg.signal.sign = match v {
                SignArg::Reversal => SignConvention::Reversal,
                SignArg::Literal => SignConvention::Literal,
            };
        }
        if let Some(v) = self.gross_target {
            cfg.portfolio.gross_target = v;
        }
        if self.clip_zscore.is_some() {
            cfg.portfolio.clip_zscore = self.clip_zscore;
        }
        if !self.schemes.is_empty() {
            cfg.schemes = self
                .schemes
                .iter()
                .map(|s| s.parse::<ExecutionScheme>())
                .collect::<Result<_>>()?;
        }
        if let Some(v) = self.max_lag {
            cfg.max_lag = v;
        }
        if let Some(v) = self.periods_per_year {
            cfg.periods_per_year = v;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.debug_dumps |= self.debug_dumps;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "ou")]
    generator: GeneratorArg,
    #[arg(long, default_value_t = 50)]
    instruments: usize,
    #[arg(long, default_value_t = 2000)]
    days: usize,
    #[arg(long, default_value_t = 0.02)]
    volatility: f64,
    /// Reversion half-life in days (OU only).
    #[arg(long, default_value_t = 3.0, conflicts_with = "rate")]
    half_life: f64,
    /// Daily reversion rate in [0, 1] (OU only).
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "SYN")]
    market: String,
    /// Warm-up and lag the universe must support.
    #[arg(long, default_value_t = 20)]
    warmup: usize,
    #[arg(long, default_value_t = 10)]
    max_lag: usize,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// summary.json files to merge.
    #[arg(required = true)]
    summaries: Vec<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn synth(args: SynthArgs) -> Result<()> {
    let generator = match args.generator {
        GeneratorArg::RandomWalk => Generator::RandomWalk,
        GeneratorArg::Ou => Generator::OuMeanRevert,
    };
    let reversion_rate = match generator {
        Generator::RandomWalk => 0.0,
        Generator::OuMeanRevert => args
            .rate
            .unwrap_or_else(|| reversion_rate_from_half_life(args.half_life)),
    };
    let spec = SyntheticSpec {
        generator,
        n_instruments: args.instruments,
        n_days: args.days,
        volatility: args.volatility,
        reversion_rate,
        seed: args.seed,
        start: chrono::NaiveDate::from_ymd_opt(2018, 1, 2).unwrap(),
    };
    spec.validate(args.warmup + args.max_lag + 2)?;
    let universe = generate_synthetic(&spec, &args.market, &args.output_dir)?;
    println!(
        "wrote {} instruments ({} to {}) to {}",
        universe.instruments.len(),
        universe.start,
        universe.end,
        args.output_dir.display()
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let tables = args
        .summaries
        .iter()
        .map(|p| report::read_summary(p))
        .collect::<Result<Vec<_>>>()?;
    let merged = report::merge_summaries(&tables)?;
    match args.output {
        Some(path) => {
            let f = std::fs::File::create(&path).map_err(|e| kfrev_core::Error::Io { path, source: e })?;
            report::write_comparison(f, &merged)
        }
        None => report::write_comparison(std::io::stdout().lock(), &merged),
    }
}

fn print_files(files: &[PathBuf], root: &Path) {
    for f in files {
        println!("{}", f.strip_prefix(root).unwrap_or(f).display());
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fetch(args) => {
            let cfg = args.into_config()?;
            let universe = Universe::load(&cfg.universe)?;
            let fetched = pipeline::fetch_all(&cfg, &universe, &HttpTransport::default())?;
            for (_, rec) in fetched {
                println!("{}\t{}", rec.instrument_id, rec.path.display());
            }
            Ok(())
        }
        Command::Backtest(args) => {
            let cfg = args.into_config()?;
            let art = pipeline::run(&cfg)?;
            for r in &art.outputs.simulation.results {
                let s = r.summary;
                println!(
                    "{} {}: mean ROG {:.3} bps, SR {:.2}, t {:.2}, {} days",
                    cfg.market_code, r.scheme, s.mean_rog_bps, s.sharpe_annualized, s.t_stat, s.n_days
                );
            }
            print_files(&art.files, &cfg.output_dir);
            Ok(())
        }
        Command::LagProfile(args) => {
            let cfg = args.into_config()?;
            let (path, lags) = pipeline::run_lag_profile(&cfg)?;
            for l in lags {
                println!("T{}: {:.3} bps (t {:.2})", l.lag, l.mean_rog_bps, l.t_stat);
            }
            println!("{}", path.display());
            Ok(())
        }
        Command::Synth(args) => synth(args),
        Command::Compare(args) => compare(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
