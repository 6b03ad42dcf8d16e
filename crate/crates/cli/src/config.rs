use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use intraday_fts_core::evalharness::{Method, WindowScheme};
use intraday_fts_core::fpca::ComponentSelection;
use intraday_fts_core::sieve::{BootstrapConfig, IntervalCenter};
use intraday_fts_core::updating::default_lambda_grid;
use intraday_fts_core::varmodel::DEFAULT_P_MAX;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Auto,
    /// `date,time,price` rows.
    Long,
    /// `date,<time_1>,...,<time_tau>` rows.
    Wide,
}

/// Every setting a run can depend on. Loaded from JSON or TOML; command-line
/// flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub output_dir: PathBuf,
    /// Days with more missing prices than this fraction are dropped.
    pub max_missing_fraction: f64,
    /// Fixed component count; `None` selects it by the eigenvalue-ratio rule.
    pub k: Option<usize>,
    /// Select the component count by cumulative variance share instead.
    pub variance_share: Option<f64>,
    pub p_max: usize,
    pub replicates: usize,
    pub seed: u64,
    pub alpha_levels: Vec<f64>,
    pub center: String,
    pub lambda_grid: Vec<f64>,
    /// Training days used to fit models for lambda tuning.
    pub train: usize,
    /// Validation days for lambda tuning; `train + validation` is the
    /// backtest's initial window.
    pub validation: usize,
    pub test: usize,
    pub methods: Vec<String>,
    /// Updating periods `m`; all `2..tau-1` when absent.
    pub periods: Option<Vec<usize>>,
    pub window: String,
    /// Previously tuned schedule to use instead of tuning.
    pub lambda_schedule: Option<PathBuf>,
    pub updating_intervals: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let boot = BootstrapConfig::default();
        Self {
            input: None,
            format: InputFormat::Auto,
            output_dir: PathBuf::from("out"),
            max_missing_fraction: 0.5,
            k: None,
            variance_share: None,
            p_max: DEFAULT_P_MAX,
            replicates: boot.replicates,
            seed: boot.seed,
            alpha_levels: boot.alpha_levels,
            center: "far1".into(),
            lambda_grid: default_lambda_grid(),
            train: 150,
            validation: 50,
            test: 50,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            periods: None,
            window: "expanding".into(),
            lambda_schedule: None,
            updating_intervals: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
    }

    pub fn selection(&self) -> Result<ComponentSelection> {
        match (self.k, self.variance_share) {
            (Some(_), Some(_)) => Err(CliError::Usage("set either k or variance_share, not both".into())),
            (Some(0), None) => Err(CliError::Usage("k must be at least 1".into())),
            (Some(k), None) => Ok(ComponentSelection::Fixed(k)),
            (None, Some(s)) if s > 0.0 && s <= 1.0 => Ok(ComponentSelection::CumulativeVariance(s)),
            (None, Some(s)) => Err(CliError::Usage(format!("variance_share {s} outside (0, 1]"))),
            (None, None) => Ok(ComponentSelection::EigenRatio),
        }
    }

    pub fn bootstrap(&self) -> Result<BootstrapConfig> {
        let center = match self.center.to_ascii_lowercase().as_str() {
            "far1" => IntervalCenter::Far1,
            "ts" => IntervalCenter::TimeSeries,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown interval center '{other}' (far1 or ts)"
                )))
            }
        };
        let cfg = BootstrapConfig {
            replicates: self.replicates,
            seed: self.seed,
            alpha_levels: self.alpha_levels.clone(),
            center,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in &self.methods {
            let m = Method::parse(name)
                .ok_or_else(|| CliError::Usage(format!("unknown method '{name}' (TS, PLS, OLS, FLR)")))?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(CliError::Usage("no methods selected".into()));
        }
        Ok(out)
    }

    pub fn window(&self) -> Result<WindowScheme> {
        match self.window.to_ascii_lowercase().as_str() {
            "expanding" => Ok(WindowScheme::Expanding),
            "rolling" => Ok(WindowScheme::Rolling),
            other => Err(CliError::Usage(format!(
                "unknown window '{other}' (expanding or rolling)"
            ))),
        }
    }

    pub fn periods(&self, tau: usize) -> Vec<usize> {
        self.periods
            .clone()
            .unwrap_or_else(|| intraday_fts_core::updating::default_periods(tau))
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Usage("no input file given (use --input or set `input`)".into()))
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Flags shared by the subcommands; each one given overrides the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigArgs {
    /// JSON or TOML run configuration.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Input price file (long or wide CSV).
    #[arg(long, short = 'i')]
    pub input: Option<PathBuf>,
    /// Input layout; detected from the header by default.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Directory for outputs and the manifest (default: out).
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    /// Run seed; every random stream is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long, short = 'B')]
    pub replicates: Option<usize>,
    /// Significance levels, e.g. `--alpha 0.2,0.05`.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Largest VAR order tried by AICc.
    #[arg(long)]
    pub p_max: Option<usize>,
    /// Fixed number of principal components.
    #[arg(long)]
    pub k: Option<usize>,
    /// Select components by cumulative variance share, e.g. 0.9.
    #[arg(long)]
    pub variance_share: Option<f64>,
    /// Interval center: far1 or ts.
    #[arg(long)]
    pub center: Option<String>,
    /// Days before the validation window.
    #[arg(long)]
    pub train: Option<usize>,
    /// Validation days for shrinkage tuning.
    #[arg(long)]
    pub validation: Option<usize>,
    /// Test days evaluated by the backtest.
    #[arg(long)]
    pub test: Option<usize>,
    /// Methods, e.g. `--methods TS,PLS,FLR`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Updating periods, e.g. `--periods 10,20,40`.
    #[arg(long, value_delimiter = ',')]
    pub periods: Option<Vec<usize>>,
    /// expanding or rolling.
    #[arg(long)]
    pub window: Option<String>,
    /// Tuned schedule (lambda_schedule.json) to use instead of tuning.
    #[arg(long)]
    pub lambda_schedule: Option<PathBuf>,
    /// Shrinkage grid, e.g. `--lambda-grid 0,0.1,1,10`.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Skip bootstrap intervals for the updating methods.
    #[arg(long)]
    pub no_updating_intervals: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatArg {
    Auto,
    Long,
    Wide,
}

impl ConfigArgs {
    /// File configuration (or defaults) with the given flags applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone().into();
                }
            };
        }
        set!(input);
        set!(output_dir);
        set!(seed);
        set!(replicates);
        set!(p_max);
        set!(center);
        set!(train);
        set!(validation);
        set!(test);
        set!(methods);
        set!(window);
        set!(lambda_grid);
        if let Some(f) = self.format {
            cfg.format = match f {
                FormatArg::Auto => InputFormat::Auto,
                FormatArg::Long => InputFormat::Long,
                FormatArg::Wide => InputFormat::Wide,
            };
        }
        if let Some(a) = &self.alpha {
            cfg.alpha_levels = a.clone();
        }
        if self.k.is_some() {
            cfg.k = self.k;
            cfg.variance_share = None;
        }
        if self.variance_share.is_some() {
            cfg.variance_share = self.variance_share;
            cfg.k = None;
        }
        if self.periods.is_some() {
            cfg.periods = self.periods.clone();
        }
        if self.lambda_schedule.is_some() {
            cfg.lambda_schedule = self.lambda_schedule.clone();
        }
        if self.no_updating_intervals {
            cfg.updating_intervals = false;
        }
        Ok(cfg)
    }
}

/// Flags of the `simulate` subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SynthArgs {
    /// JSON or TOML synthetic-data settings; defaults are used when absent.
    #[arg(long, short = 's')]
    pub spec: Option<PathBuf>,
    /// Overrides the seed in the settings file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of days.
    #[arg(long, short = 'n')]
    pub n: Option<usize>,
    /// Grid points per day.
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long, short = 'o', default_value = "out")]
    pub output_dir: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 7\nreplicates = 50\nmethods = [\"TS\"]\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            seed: Some(11),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.replicates, 50);
        assert_eq!(cfg.methods, vec!["TS".to_string()]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"seeed": 1}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Usage(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
