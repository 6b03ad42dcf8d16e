use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands;
use crate::config::{ConfigArgs, SynthArgs};
use crate::error::Result;

/// Forecasting and dynamic updating of intraday cumulative return curves.
#[derive(Debug, Parser)]
#[command(name = "intraday-fts", version, about)]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(long, short = 'q', global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a price file and write the wide price panel, curves and a summary.
    Ingest(ConfigArgs),
    /// Fit the principal components and score VAR; write the model.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Fit on the first N days only.
        #[arg(long)]
        through: Option<usize>,
    },
    /// Forecast the next day's curve with bootstrap intervals and bands.
    Forecast {
        #[command(flatten)]
        config: ConfigArgs,
        /// Fit on the first N days and forecast day N.
        #[arg(long)]
        through: Option<usize>,
    },
    /// Update one day's forecast as intraday prices arrive.
    Update {
        #[command(flatten)]
        config: ConfigArgs,
        /// Date or zero-based day index to update (default: the last day).
        #[arg(long)]
        day: Option<String>,
        /// Fixed PLS shrinkage instead of a tuned schedule.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Tune the PLS shrinkage for every updating period on validation days.
    Tune(ConfigArgs),
    /// Rolling-origin evaluation of all requested methods.
    Backtest(ConfigArgs),
    /// Generate a synthetic price panel with known ground truth.
    Simulate(SynthArgs),
    /// Rewrite plotting CSVs from a saved report.
    ExportPlots {
        /// report.json written by `backtest`.
        #[arg(long, short = 'r')]
        report: PathBuf,
        /// Optional forecast.json written by `forecast`.
        #[arg(long, short = 'f')]
        forecast: Option<PathBuf>,
        #[arg(long, short = 'o', default_value = "out")]
        output_dir: PathBuf,
    },
}

impl Cli {
    pub fn run(&self) -> Result<()> {
        match &self.command {
            Command::Ingest(c) => commands::ingest(&c.resolve()?),
            Command::Fit { config, through } => commands::fit(&config.resolve()?, *through),
            Command::Forecast { config, through } => commands::forecast(&config.resolve()?, *through),
            Command::Update { config, day, lambda } => commands::update(&config.resolve()?, day.as_deref(), *lambda),
            Command::Tune(c) => commands::tune(&c.resolve()?),
            Command::Backtest(c) => commands::backtest(&c.resolve()?),
            Command::Simulate(s) => commands::simulate(s),
            Command::ExportPlots {
                report,
                forecast,
                output_dir,
            } => commands::export_plots(report, forecast.as_deref(), output_dir),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 success, 1 usage or configuration error, 2 data or I/O error,
/// 3 numerical failure.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match cli.run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
