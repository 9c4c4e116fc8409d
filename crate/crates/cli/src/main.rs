use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Duration, NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand};

use sunforecast::analysis::{correlation_table, write_correlation_csv, CorrelationColumns};
use sunforecast::pipeline::{
    backcast, evaluate, find_gaps, forecast, generate, ingest, load_file, retrain, run_rolling,
    sensitivity, write_evaluation, Config, Dataset, ForecastContext, ForecastJob, ModelSet,
    ModelStore, Resolution, SyntheticConfig, FEATURE_NAMES,
};
use sunforecast::{format_timestamp, parse_timestamp};

#[derive(Parser)]
#[command(name = "sunforecast", version, about = "Irradiance and PV generation forecasting")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reference instant (`YYYY-MM-DD` or `YYYY-MM-DDTHH:MM[:SS]`).
    #[arg(long, global = true)]
    as_of: Option<String>,
    /// Forecast horizon in hours.
    #[arg(long, global = true)]
    horizon: Option<u32>,
    /// `15min` or `hourly`.
    #[arg(long, global = true)]
    resolution: Option<Resolution>,
    /// Overrides `training.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    weather: Option<PathBuf>,
    #[arg(long, global = true)]
    nwp: Option<PathBuf>,
    #[arg(long, global = true)]
    production: Option<PathBuf>,
    /// Overrides `data.model_dir`.
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, clean and impute the input files; writes `dataset.csv`.
    Ingest,
    /// Train the model set on the window ending at `--as-of` and store it.
    Retrain {
        /// Defaults to `schedule.retrain_window_days`.
        #[arg(long)]
        window_days: Option<u32>,
    },
    /// Forecast from the issue time `--as-of`; writes `forecast.csv` and `daily.csv`.
    Forecast {
        /// Model file; otherwise the newest stored model at or before the issue time.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fill measurement gaps with model estimates; writes `backcast.csv`.
    Backcast {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rolling retrain-and-forecast run from `--as-of`, scored against measurements.
    Evaluate {
        #[arg(long, default_value_t = 30)]
        days: u32,
        /// Keep every model trained during the run in the model directory.
        #[arg(long)]
        keep_models: bool,
    },
    /// First-order Sobol indices of the ensemble over its training ranges.
    Sensitivity {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Correlation of each weather variable with generation over daylight steps.
    Correlate,
    /// Write a synthetic site (input files and a matching config) to `--out-dir`.
    Synth {
        #[arg(long, default_value_t = 400)]
        days: u32,
        /// First day; defaults to 2021-01-01.
        #[arg(long)]
        start: Option<NaiveDate>,
        /// NWP days issued past the last measurement.
        #[arg(long, default_value_t = 7)]
        lead_days: u32,
    },
    /// Print the effective configuration as TOML.
    Config,
}

struct Ctx {
    common: Common,
    config: Config,
}

impl Ctx {
    fn new(common: Common) -> Result<Self> {
        let mut config = match &common.config {
            Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Config::default(),
        };
        if let Some(seed) = common.seed {
            config.training.seed = seed;
        }
        if let Some(dir) = &common.model_dir {
            config.data.model_dir = dir.clone();
        }
        Ok(Self { common, config })
    }

    fn as_of(&self) -> Result<Option<NaiveDateTime>> {
        self.common
            .as_of
            .as_deref()
            .map(|s| {
                parse_timestamp(s)
                    .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
                    .with_context(|| format!("--as-of: cannot parse '{s}'"))
            })
            .transpose()
    }

    fn input(&self, flag: &Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| configured.clone())
            .with_context(|| format!("no {name} file: pass --{name} or set data.{name}_csv"))
    }

    fn dataset(&self) -> Result<Dataset> {
        let c = &self.common;
        let d = &self.config.data;
        let weather = self.input(&c.weather, &d.weather_csv, "weather")?;
        let nwp = self.input(&c.nwp, &d.nwp_csv, "nwp")?;
        let production = self.input(&c.production, &d.production_csv, "production")?;
        Ok(ingest(&self.config, &weather, &nwp, &production)?)
    }

    fn store(&self) -> Result<ModelStore> {
        Ok(ModelStore::open(&self.config.data.model_dir)?)
    }

    fn models(&self, explicit: &Option<PathBuf>, at: NaiveDateTime) -> Result<ModelSet> {
        match explicit {
            Some(p) => Ok(load_file(p)?),
            None => Ok(self.store()?.latest_at_or_before(at)?),
        }
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.common.out_dir)
            .with_context(|| format!("creating {}", self.common.out_dir.display()))?;
        Ok(self.common.out_dir.join(name))
    }
}

fn day_after_last(d: &Dataset) -> Result<NaiveDate> {
    let last = d.last_date().context("dataset is empty")?;
    Ok(last + Duration::days(1))
}

fn midnight(d: NaiveDate) -> NaiveDateTime {
    d.and_hms_opt(0, 0, 0).expect("midnight exists")
}

fn cmd_ingest(ctx: &Ctx) -> Result<()> {
    let d = ctx.dataset()?;
    let path = ctx.out("dataset.csv")?;
    d.write_csv(&path)?;
    println!(
        "{} steps from {} to {}, {} imputed cells, {} steps without NWP -> {}",
        d.len(),
        d.first_date().map(|x| x.to_string()).unwrap_or_default(),
        d.last_date().map(|x| x.to_string()).unwrap_or_default(),
        d.imputed_cells(),
        d.missing_cells(),
        path.display()
    );
    Ok(())
}

fn cmd_retrain(ctx: &Ctx, window_days: Option<u32>) -> Result<()> {
    let d = ctx.dataset()?;
    let as_of = match ctx.as_of()? {
        Some(t) => t,
        None => midnight(day_after_last(&d)?),
    };
    let window = window_days.unwrap_or(ctx.config.schedule.retrain_window_days);
    let m = retrain(&d, &ctx.config, window, as_of)?;
    let path = ctx.store()?.save(&m)?;
    let w = m.ensemble.weights();
    let total: f64 = w.iter().sum();
    println!(
        "model {} trained through {} on {} rows ({} validation); ensemble weights ann {:.3} svm {:.3} cart {:.3} -> {}",
        m.version,
        format_timestamp(m.trained_through),
        m.training_rows,
        m.validation_rows,
        w[0] / total,
        w[1] / total,
        w[2] / total,
        path.display()
    );
    Ok(())
}

fn cmd_forecast(ctx: &Ctx, model: &Option<PathBuf>) -> Result<()> {
    let d = ctx.dataset()?;
    let s = &ctx.config.schedule;
    let issue = match ctx.as_of()? {
        Some(t) => t,
        None => day_after_last(&d)?.and_hms_opt(s.issue_hour, 0, 0).context("issue hour")?,
    };
    let job = ForecastJob {
        issue_time: issue,
        horizon_hours: ctx.common.horizon.unwrap_or(s.default_horizon_hours),
        resolution: ctx.common.resolution.unwrap_or(Resolution::Min15),
    };
    let m = ctx.models(model, issue)?;
    let series = forecast(&ctx.config, &job, &m, &ForecastContext::new(&d, issue))?;
    let path = ctx.out("forecast.csv")?;
    series.write_csv(&path)?;
    series.write_daily_csv(&ctx.out("daily.csv")?)?;
    let peak = series.kw_ac.iter().copied().fold(0.0, f64::max);
    println!(
        "{} steps from {} with model {}; peak {:.1} kW -> {}",
        series.len(),
        format_timestamp(issue),
        series.model_version,
        peak,
        path.display()
    );
    for (day, wh) in &series.daily_irradiation_whm2 {
        println!("  {day}: {wh:.0} Whr/m²");
    }
    Ok(())
}

fn cmd_backcast(ctx: &Ctx, model: &Option<PathBuf>) -> Result<()> {
    let d = ctx.dataset()?;
    let gaps = find_gaps(&d);
    let at = match ctx.as_of()? {
        Some(t) => t,
        None => NaiveDateTime::MAX,
    };
    let m = ctx.models(model, at)?;
    let result = backcast(&d, &ctx.config, &m, &gaps)?;
    let path = ctx.out("backcast.csv")?;
    result.write_csv(&path)?;
    println!(
        "{} gap(s), {} steps filled with model {} -> {}",
        gaps.len(),
        result.imputed.iter().filter(|f| **f).count(),
        result.model_version,
        path.display()
    );
    for g in &gaps {
        println!("  {} .. {}", format_timestamp(g.start), format_timestamp(g.end));
    }
    Ok(())
}

fn cmd_evaluate(ctx: &Ctx, days: u32, keep_models: bool) -> Result<()> {
    if days == 0 {
        bail!("--days must be positive");
    }
    let d = ctx.dataset()?;
    let start = match ctx.as_of()? {
        Some(t) => t.date(),
        None => day_after_last(&d)? - Duration::days(i64::from(days)),
    };
    let store = if keep_models { Some(ctx.store()?) } else { None };
    let run = run_rolling(&d, &ctx.config, start, days, store.as_ref())?;
    let report = evaluate(&d, &run.forecasts)?;
    write_evaluation(&ctx.common.out_dir, &report)?;
    println!(
        "{} days from {start}, {} retrains, {} scored steps -> {}",
        report.days,
        run.model_versions.len(),
        report.steps,
        ctx.common.out_dir.join("report.json").display()
    );
    println!("  {:<9}{:>10}{:>12}{:>10}{:>9}{:>8}", "model", "MAE", "MSE", "RMSE", "RRMSE", "R²");
    for m in &report.intraday {
        let r = &m.metrics;
        println!(
            "  {:<9}{:>10.3}{:>12.1}{:>10.3}{:>9.4}{:>8.3}",
            m.model, r.mae, r.mse, r.rmse, r.rrmse, r.r_squared
        );
    }
    for m in &report.daily {
        println!("  daily {:<9} MAE {:.1} Whr/m²", m.model, m.metrics.mae);
    }
    Ok(())
}

fn cmd_sensitivity(ctx: &Ctx, model: &Option<PathBuf>, samples: usize) -> Result<()> {
    let at = ctx.as_of()?.unwrap_or(NaiveDateTime::MAX);
    let m = ctx.models(model, at)?;
    let report = sensitivity(&m, &m.feature_ranges(), samples, ctx.config.training.seed)?;
    let path = ctx.out("sensitivity.json")?;
    let mut json = serde_json::to_vec_pretty(&serde_json::json!({
        "model_version": m.version,
        "features": FEATURE_NAMES,
        "report": report,
    }))?;
    json.push(b'\n');
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    println!("model {} -> {}", m.version, path.display());
    for (name, s) in FEATURE_NAMES.iter().zip(&report.first_order) {
        println!("  {name:<22} {s:.4}");
    }
    Ok(())
}

fn cmd_correlate(ctx: &Ctx) -> Result<()> {
    let d = ctx.dataset()?;
    let day: Vec<_> = d.samples.iter().filter(|s| s.ideal_irradiance_wm2 > 0.0).collect();
    let col = |f: fn(&sunforecast::pipeline::WeatherSample) -> f64| day.iter().map(|s| f(s)).collect::<Vec<f64>>();
    let (ideal, irr, amb, module, cloud, gen) = (
        col(|s| s.ideal_irradiance_wm2),
        col(|s| s.irradiance_wm2),
        col(|s| s.ambient_temp_f),
        col(|s| s.module_temp_f),
        col(|s| s.cloud_cover_pct),
        col(|s| s.generation_kw),
    );
    let table = correlation_table(&CorrelationColumns {
        ideal_irradiance: &ideal,
        irradiance: &irr,
        ambient_temp: &amb,
        module_temp: &module,
        cloud_cover: &cloud,
        generation: &gen,
    })?;
    let path = ctx.out("correlation.csv")?;
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_correlation_csv(file, &table)?;
    println!("{} daylight steps -> {}", day.len(), path.display());
    for e in &table {
        println!("  {:<18} {:+.4}", e.variable, e.coefficient);
    }
    Ok(())
}

fn cmd_synth(ctx: &Ctx, days: u32, start: Option<NaiveDate>, lead_days: u32) -> Result<()> {
    let mut syn = SyntheticConfig {
        site: ctx.config.site,
        plant: ctx.config.plant.clone(),
        days,
        nwp_lead_days: lead_days,
        ..SyntheticConfig::default()
    };
    if let Some(d) = start {
        syn.start = midnight(d);
    }
    if let Some(seed) = ctx.common.seed {
        syn.seed = seed;
    }
    let data = generate(&syn)?;
    let dir = &ctx.common.out_dir;
    data.write(dir)?;

    let mut config = ctx.config.clone();
    config.data.weather_csv = Some("weather.csv".into());
    config.data.nwp_csv = Some("nwp.csv".into());
    config.data.production_csv = Some("production.csv".into());
    config.data.model_dir = "models".into();
    let cfg_path = dir.join("config.toml");
    write_text(&cfg_path, &config.to_toml())?;
    println!(
        "{days} days from {} ({} weather rows, {} NWP hours) -> {}",
        syn.start.date(),
        data.weather.len(),
        data.nwp.len(),
        cfg_path.display()
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let ctx = Ctx::new(cli.common)?;
    match cli.command {
        Command::Ingest => cmd_ingest(&ctx),
        Command::Retrain { window_days } => cmd_retrain(&ctx, window_days),
        Command::Forecast { model } => cmd_forecast(&ctx, &model),
        Command::Backcast { model } => cmd_backcast(&ctx, &model),
        Command::Evaluate { days, keep_models } => cmd_evaluate(&ctx, days, keep_models),
        Command::Sensitivity { model, samples } => cmd_sensitivity(&ctx, &model, samples),
        Command::Correlate => cmd_correlate(&ctx),
        Command::Synth { days, start, lead_days } => cmd_synth(&ctx, days, start, lead_days),
        Command::Config => {
            print!("{}", ctx.config.to_toml());
            Ok(())
        }
    }
}
