//! Subcommand implementations. Each reads its inputs, writes its outputs
//! into the output directory and finishes with a `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use intraday_fts_core::datagen::generate;
use intraday_fts_core::evalharness::{forecast_day, prepare_validation_days, run_backtest, BacktestPlan, Method};
use intraday_fts_core::fpca::FpcaModel;
use intraday_fts_core::gridcurves::{inverse_cidr, FunctionalTimeSeries};
use intraday_fts_core::rng::derive_seed;
use intraday_fts_core::sieve::{sieve_prediction, IntervalCenter};
use intraday_fts_core::updating::{tune_lambda, update_columns, LambdaSchedule, TuningObjective};
use intraday_fts_core::varmodel::{select_order, VarModel};

use crate::config::{RunConfig, SynthArgs};
use crate::error::{CliError, Result};
use crate::export::{write_forecast_csv, write_lambda_csv, write_report_csvs, write_update_csv};
use crate::formats::{
    read_json, rows, write_json, ForecastFile, FpcaDoc, IntervalDoc, LambdaScheduleFile, ModelFile, ReportFile,
    ScheduleDoc, SynthSpecFile, TruthFile, UpdateFile, UpdateMethodDoc, UpdatePeriodDoc, VarDoc, SCHEMA_VERSION,
};
use crate::ingest::{load_dataset, write_wide, DataSummary, Dataset};
use crate::manifest::Manifest;

fn output_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}

fn load(cfg: &RunConfig) -> Result<(Dataset, FunctionalTimeSeries)> {
    let ds = load_dataset(cfg.input()?, cfg.format, cfg.max_missing_fraction)?;
    let fts = ds.curves();
    info!("loaded {} days x {} grid points", fts.n(), ds.tau());
    Ok((ds, fts))
}

fn manifest(command: &str, cfg: &RunConfig) -> Result<Manifest> {
    let mut m = Manifest::new(command, cfg, cfg.hash(), cfg.seed);
    m.input(cfg.input()?)?;
    Ok(m)
}

/// Number of leading days to fit on: all days unless `through` is given.
fn fitted_days(through: Option<usize>, n: usize) -> Result<usize> {
    match through {
        Some(t) if t < 3 || t > n => Err(CliError::Usage(format!("--through must be in 3..={n}, got {t}"))),
        Some(t) => Ok(t),
        None => Ok(n),
    }
}

fn center_name(cfg: &RunConfig) -> Result<&'static str> {
    Ok(match cfg.bootstrap()?.center {
        IntervalCenter::Far1 => "far1",
        IntervalCenter::TimeSeries => "ts",
    })
}

fn check_periods(periods: &[usize], tau: usize) -> Result<()> {
    if let Some(m) = periods.iter().find(|&&m| m < 2 || m >= tau) {
        return Err(CliError::Usage(format!("updating period {m} outside 2..{tau}")));
    }
    Ok(())
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let dir = output_dir(&cfg.output_dir)?;
    let (ds, fts) = load(cfg)?;
    let prices = dir.join("prices.csv");
    write_wide(&prices, &ds.dates, &ds.time_labels, &ds.prices)?;
    let curves = dir.join("curves.csv");
    let mut w = csv::Writer::from_path(&curves)?;
    let mut header = vec!["date".to_string()];
    header.extend(ds.time_labels.iter().skip(1).cloned());
    w.write_record(&header)?;
    for (t, date) in ds.dates.iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend(fts.curve(t).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&curves, e))?;
    let summary = dir.join("summary.json");
    write_json(&summary, &DataSummary::new(&ds))?;
    if !ds.report.dropped.is_empty() {
        info!("dropped {} day(s); see summary.json", ds.report.dropped.len());
    }
    manifest("ingest", cfg)?.finish(&dir, &[prices, curves, summary])?;
    Ok(())
}

pub fn fit(cfg: &RunConfig, through: Option<usize>) -> Result<()> {
    let dir = output_dir(&cfg.output_dir)?;
    let (ds, fts) = load(cfg)?;
    let n = fitted_days(through, fts.n())?;
    let train = fts.slice(0, n);
    let fpca = FpcaModel::fit(train.values(), train.grid().quad_weight(), cfg.selection()?)?;
    let scores = fpca.retained_scores();
    let order = select_order(&scores, cfg.p_max)?;
    let var = VarModel::fit(&scores, order.p)?;
    info!("K = {}, p = {}", fpca.k(), var.p());

    let model = dir.join("model.json");
    write_json(
        &model,
        &ModelFile {
            schema_version: SCHEMA_VERSION,
            n,
            tau: ds.tau(),
            dates: (ds.dates[0].clone(), ds.dates[n - 1].clone()),
            time_labels: ds.time_labels.clone(),
            fpca: FpcaDoc::new(&fpca),
            var: VarDoc::new(&var, &order),
        },
    )?;

    let scores_csv = dir.join("scores.csv");
    let mut w = csv::Writer::from_path(&scores_csv)?;
    let mut header = vec!["date".to_string()];
    header.extend((1..=fpca.k()).map(|k| format!("score_{k}")));
    w.write_record(&header)?;
    for (t, row) in rows(&scores).iter().enumerate() {
        let mut rec = vec![ds.dates[t].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&scores_csv, e))?;

    let eig_csv = dir.join("eigenfunctions.csv");
    let mut w = csv::Writer::from_path(&eig_csv)?;
    let mut header = vec!["grid_index".to_string(), "time".to_string(), "mean".to_string()];
    header.extend((1..=fpca.k()).map(|k| format!("phi_{k}")));
    w.write_record(&header)?;
    let phi = fpca.retained_eigenfunctions();
    for j in 0..fpca.curve_len() {
        let mut rec = vec![
            (j + 2).to_string(),
            ds.time_labels[j + 1].clone(),
            fpca.mean()[j].to_string(),
        ];
        rec.extend(phi.row(j).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&eig_csv, e))?;

    manifest("fit", cfg)?.finish(&dir, &[model, scores_csv, eig_csv])?;
    Ok(())
}

/// Forecasts the day after the first `through` days (default: all). The
/// bootstrap seed is derived from the run seed and the forecast day index,
/// so `forecast --through d` reproduces the backtest's forecast of day `d`.
pub fn forecast(cfg: &RunConfig, through: Option<usize>) -> Result<()> {
    let dir = output_dir(&cfg.output_dir)?;
    let (ds, fts) = load(cfg)?;
    let n = fitted_days(through, fts.n())?;
    let train = fts.slice(0, n);
    let fpca = FpcaModel::fit(train.values(), train.grid().quad_weight(), cfg.selection()?)?;
    let scores = fpca.retained_scores();
    let var = VarModel::fit(&scores, select_order(&scores, cfg.p_max)?.p)?;
    let mut boot = cfg.bootstrap()?;
    boot.seed = derive_seed(cfg.seed, n as u64);
    info!("bootstrap with {} replicates", boot.replicates);
    let sieve = sieve_prediction(&train, &fpca, &var, &boot)?;

    let mut doc = ForecastFile::from_sieve(&sieve, var.p(), center_name(cfg)?);
    doc.fitted_through = ds.dates[n - 1].clone();
    doc.n = n;
    doc.time_labels = ds.time_labels.clone();
    if doc.flags.few_replicates || doc.flags.zero_sd_points > 0 {
        log::warn!(
            "unstable intervals: {} replicates, {} grid points with zero bootstrap spread",
            doc.replicates,
            doc.flags.zero_sd_points
        );
    }
    let json = dir.join("forecast.json");
    write_json(&json, &doc)?;
    let csv = write_forecast_csv(&dir.join("forecast.csv"), &doc)?;
    manifest("forecast", cfg)?.finish(&dir, &[json, csv])?;
    Ok(())
}

/// Point and interval shrinkage schedules tuned on validation days
/// `train_end..train_end + n_validation`.
pub fn tune_schedules(
    fts: &FunctionalTimeSeries,
    cfg: &RunConfig,
    periods: &[usize],
    train_end: usize,
    n_validation: usize,
) -> Result<LambdaScheduleFile> {
    if n_validation == 0 {
        return Err(CliError::Usage("tuning needs at least one validation day".into()));
    }
    if train_end < 3 {
        return Err(CliError::Usage(format!(
            "tuning needs at least 3 training days, got {train_end}"
        )));
    }
    let boot = if cfg.updating_intervals {
        Some(cfg.bootstrap()?)
    } else {
        None
    };
    info!("preparing {n_validation} validation days after day {train_end}");
    let days = prepare_validation_days(fts, train_end, n_validation, cfg.selection()?, cfg.p_max, boot.as_ref())?;
    let tuned_through = Some(train_end + n_validation);
    let mut point = tune_lambda(&days, periods, &cfg.lambda_grid, TuningObjective::Msfe)?;
    point.tuned_through = tuned_through;
    let interval = match &boot {
        Some(b) => {
            let objective = TuningObjective::IntervalScore {
                alpha: b.alpha_levels[0],
            };
            let mut s = tune_lambda(&days, periods, &cfg.lambda_grid, objective)?;
            s.tuned_through = tuned_through;
            s
        }
        None => point.clone(),
    };
    Ok(LambdaScheduleFile {
        schema_version: SCHEMA_VERSION,
        point: ScheduleDoc::new(&point),
        interval: ScheduleDoc::new(&interval),
    })
}

pub fn tune(cfg: &RunConfig) -> Result<()> {
    let dir = output_dir(&cfg.output_dir)?;
    let (ds, fts) = load(cfg)?;
    let periods = cfg.periods(ds.tau());
    check_periods(&periods, ds.tau())?;
    let file = tune_schedules(&fts, cfg, &periods, cfg.train, cfg.validation)?;
    let json = dir.join("lambda_schedule.json");
    write_json(&json, &file)?;
    let csv = write_lambda_csv(&dir.join("lambda_by_period.csv"), &file, &ds.time_labels)?;
    manifest("tune", cfg)?.finish(&dir, &[json, csv])?;
    Ok(())
}

fn schedules(file: &LambdaScheduleFile) -> (LambdaSchedule, LambdaSchedule) {
    (file.point.to_schedule(), file.interval.to_schedule())
}

fn base_plan(cfg: &RunConfig, tau: usize) -> Result<BacktestPlan> {
    let mut plan = BacktestPlan::new(tau);
    plan.methods = cfg.methods()?;
    plan.periods = cfg.periods(tau);
    plan.bootstrap = cfg.bootstrap()?;
    plan.p_max = cfg.p_max;
    plan.selection = cfg.selection()?;
    plan.window = cfg.window()?;
    plan.updating_intervals = cfg.updating_intervals;
    Ok(plan)
}

/// Rolling-origin evaluation over days `train + validation ..` of the
/// cleaned series. PLS shrinkage comes from `lambda_schedule` when given and
/// is otherwise tuned on the validation days first.
pub fn backtest(cfg: &RunConfig) -> Result<()> {
    let dir = output_dir(&cfg.output_dir)?;
    let (ds, fts) = load(cfg)?;
    let tau = ds.tau();
    let mut plan = base_plan(cfg, tau)?;
    plan.initial_train = cfg.train + cfg.validation;
    plan.n_test = cfg.test;
    check_periods(&plan.periods, tau)?;
    // Reject infeasible splits before any fitting or tuning.
    let need = plan.initial_train + plan.n_test;
    if need > fts.n() {
        return Err(intraday_fts_core::Error::InsufficientData {
            what: "days for training, validation and test windows",
            need,
            got: fts.n(),
        }
        .into());
    }
    let mut m = manifest("backtest", cfg)?;

    let lambda = if plan.methods.contains(&Method::Pls) {
        let file = match &cfg.lambda_schedule {
            Some(path) => {
                m.input(path)?;
                read_json::<LambdaScheduleFile>(path)?
            }
            None => tune_schedules(&fts, cfg, &plan.periods, cfg.train, cfg.validation)?,
        };
        let (point, interval) = schedules(&file);
        plan.point_lambda = Some(point);
        plan.interval_lambda = Some(interval);
        Some(file)
    } else {
        None
    };

    info!(
        "backtest over days {}..{} with {} replicates",
        plan.initial_train,
        plan.initial_train + plan.n_test,
        plan.bootstrap.replicates
    );
    let report = run_backtest(&fts, &plan)?;
    if !report.skipped_days.is_empty() || !report.skipped_cells.is_empty() {
        log::warn!(
            "skipped {} day(s) and {} (method, period, day) cell(s); see skipped.csv",
            report.skipped_days.len(),
            report.skipped_cells.len()
        );
    }
    let doc = ReportFile::new(&report, &ds.dates, &ds.time_labels, plan.initial_train, lambda);
    let json = dir.join("report.json");
    write_json(&json, &doc)?;
    let mut outputs = vec![json];
    outputs.extend(write_report_csvs(&dir, &doc)?);
    m.finish(&dir, &outputs)?;
    Ok(())
}

fn resolve_day(ds: &Dataset, day: Option<&str>) -> Result<usize> {
    let n = ds.dates.len();
    let d = match day {
        None => n - 1,
        Some(s) => match ds.dates.iter().position(|d| d == s) {
            Some(i) => i,
            None => s
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--day '{s}' is neither a date in the data nor a day index")))?,
        },
    };
    if d < 3 || d >= n {
        return Err(CliError::Usage(format!("day index {d} outside 3..{n}")));
    }
    Ok(d)
}

/// Updates the forecast of one day (default: the last) at every configured
/// period from the prices observed so far, with all configured methods.
pub fn update(cfg: &RunConfig, day: Option<&str>, lambda: Option<f64>) -> Result<()> {
    let dir = output_dir(&cfg.output_dir)?;
    let (ds, fts) = load(cfg)?;
    let tau = ds.tau();
    let d = resolve_day(&ds, day)?;
    let mut plan = base_plan(cfg, tau)?;
    check_periods(&plan.periods, tau)?;
    let mut m = manifest("update", cfg)?;

    if plan.methods.contains(&Method::Pls) {
        let (point, interval) = match (lambda, &cfg.lambda_schedule) {
            (Some(l), _) => {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(CliError::Usage(format!(
                        "--lambda must be finite and non-negative, got {l}"
                    )));
                }
                (
                    LambdaSchedule::constant(TuningObjective::Msfe, &plan.periods, l),
                    LambdaSchedule::constant(TuningObjective::Msfe, &plan.periods, l),
                )
            }
            (None, Some(path)) => {
                m.input(path)?;
                schedules(&read_json(path)?)
            }
            (None, None) => {
                let n_val = cfg.validation.min(d.saturating_sub(3));
                schedules(&tune_schedules(&fts, cfg, &plan.periods, d - n_val, n_val)?)
            }
        };
        plan.point_lambda = Some(point);
        plan.interval_lambda = Some(interval);
    }

    let train = match plan.window {
        intraday_fts_core::evalharness::WindowScheme::Expanding => fts.slice(0, d),
        intraday_fts_core::evalharness::WindowScheme::Rolling => {
            fts.slice(d.saturating_sub(cfg.train + cfg.validation), d)
        }
    };
    let actual = fts.curve(d);
    let f = forecast_day(&train, &actual, &plan, derive_seed(cfg.seed, d as u64))?;

    let mut periods = Vec::new();
    for &p in &plan.periods {
        let cols = update_columns(p, tau);
        let methods = plan
            .methods
            .iter()
            .filter_map(|&method| {
                let cell = f.cells.get(&(method, p))?;
                let lambda = match method {
                    Method::Pls => plan.point_lambda.as_ref().and_then(|s| s.get(p)),
                    Method::Ols => Some(0.0),
                    _ => None,
                };
                Some(match cell {
                    Ok(c) => UpdateMethodDoc {
                        method: method.name().into(),
                        lambda,
                        point: Some(c.point.clone()),
                        intervals: c
                            .intervals
                            .iter()
                            .map(|iv| IntervalDoc {
                                alpha: iv.alpha,
                                lower: iv.lower.clone(),
                                upper: iv.upper.clone(),
                            })
                            .collect(),
                        error: None,
                    },
                    Err(reason) => UpdateMethodDoc {
                        method: method.name().into(),
                        lambda,
                        point: None,
                        intervals: Vec::new(),
                        error: Some(reason.clone()),
                    },
                })
            })
            .collect();
        periods.push(UpdatePeriodDoc {
            m: p,
            grid_indices: cols.clone().map(|c| c + 2).collect(),
            actual: Some(actual[cols].to_vec()),
            methods,
        });
    }
    let doc = UpdateFile {
        schema_version: SCHEMA_VERSION,
        date: ds.dates[d].clone(),
        fitted_days: train.n(),
        time_labels: ds.time_labels.clone(),
        periods,
    };
    let json = dir.join("update.json");
    write_json(&json, &doc)?;
    let csv = write_update_csv(&dir.join("update.csv"), &doc, &plan.bootstrap.alpha_levels)?;
    m.finish(&dir, &[json, csv])?;
    Ok(())
}

fn clock(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

/// Writes a synthetic price panel (wide CSV) with its ground truth.
pub fn simulate(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
                toml::from_str::<SynthSpecFile>(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            } else {
                serde_json::from_str::<SynthSpecFile>(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
        }
        None => SynthSpecFile::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(t) = args.tau {
        spec.tau = t;
    }
    let core_spec = spec.to_spec()?;
    let (fts, truth) = generate(&core_spec)?;
    let prices = inverse_cidr(&fts, &vec![spec.open_price; spec.n])?;

    let dir = output_dir(&args.output_dir)?;
    let dates: Vec<String> = (1..=spec.n).map(|t| format!("day{t:04}")).collect();
    let labels: Vec<String> = (0..spec.tau as u32)
        .map(|i| clock(spec.start_minute + i * spec.step_minutes))
        .collect();
    let prices_csv = dir.join("prices.csv");
    write_wide(&prices_csv, &dates, &labels, &prices)?;
    let truth_json = dir.join("truth.json");
    write_json(&truth_json, &TruthFile::new(&spec, &truth))?;

    let canonical = serde_json::to_string(&spec)?;
    let hash = crate::config::hex(&<sha2::Sha256 as sha2::Digest>::digest(canonical.as_bytes()));
    let mut m = Manifest::new("simulate", &spec, hash, spec.seed);
    if let Some(path) = &args.spec {
        m.input(path)?;
    }
    m.finish(&dir, &[prices_csv, truth_json])?;
    Ok(())
}

/// Regenerates the tidy CSVs from a saved report (and optionally a forecast).
pub fn export_plots(report: &Path, forecast: Option<&Path>, out: &Path) -> Result<()> {
    let dir = output_dir(out)?;
    let doc: ReportFile = read_json(report)?;
    let mut outputs = write_report_csvs(&dir, &doc)?;
    if let Some(f) = forecast {
        let fdoc: ForecastFile = read_json(f)?;
        outputs.push(write_forecast_csv(&dir.join("forecast.csv"), &fdoc)?);
    }
    info!("wrote {} file(s) to {}", outputs.len(), dir.display());
    Ok(())
}
