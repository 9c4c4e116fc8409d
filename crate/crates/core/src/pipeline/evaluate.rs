use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::STEP_MINUTES;
use super::forecast::{forecast, ForecastJob, ForecastSeries};
use super::guard::{check_no_lookahead, ForecastContext};
use super::io::write_atomic;
use super::{io_err, retrain, Config, Dataset, ModelSet, ModelStore, PipelineError, Resolution};
use crate::analysis::{
    hourly_error_distribution, lag_plot_data, metrics, write_hourly_csv, write_lag_csv, HourlyBox,
    LagPlotData, MetricReport,
};

/// Report order.
pub const MODEL_NAMES: [&str; 4] = ["svm", "cart", "ann", "ensemble"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyErrors {
    pub model: String,
    pub boxes: Vec<HourlyBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Daylight 15-minute steps scored.
    pub steps: usize,
    pub days: usize,
    /// 15-minute irradiance, W/m².
    pub intraday: Vec<ModelMetrics>,
    /// Daily irradiation, Whr/m². Empty with fewer than two days.
    pub daily: Vec<ModelMetrics>,
    pub hourly_errors: Vec<HourlyErrors>,
    /// Lag-one pairs of the measured irradiance at the scored steps.
    pub lag: LagPlotData,
}

impl EvaluationReport {
    pub fn intraday_for(&self, model: &str) -> Option<&MetricReport> {
        self.intraday.iter().find(|m| m.model == model).map(|m| &m.metrics)
    }

    pub fn daily_for(&self, model: &str) -> Option<&MetricReport> {
        self.daily.iter().find(|m| m.model == model).map(|m| &m.metrics)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingResult {
    pub forecasts: Vec<ForecastSeries>,
    /// Version of every model trained, in order.
    pub model_versions: Vec<String>,
}

/// Simulates daily operation over `days` days from `start`: retrain at
/// midnight every `retrain_interval_days`, then issue one forecast at
/// `issue_hour` running to the end of the day. Days are processed in
/// parallel and merged in date order.
pub fn run_rolling(
    dataset: &Dataset,
    config: &Config,
    start: NaiveDate,
    days: u32,
    store: Option<&ModelStore>,
) -> Result<RollingResult, PipelineError> {
    let s = &config.schedule;
    let dates: Vec<NaiveDate> = (0..days).map(|i| start + Duration::days(i64::from(i))).collect();
    let midnight = |d: NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight");

    let retrain_dates: Vec<NaiveDate> = dates
        .iter()
        .enumerate()
        .filter(|(i, _)| (*i as u32).is_multiple_of(s.retrain_interval_days))
        .map(|(_, d)| *d)
        .collect();
    let models: Vec<ModelSet> = retrain_dates
        .par_iter()
        .map(|&d| retrain(dataset, config, s.retrain_window_days, midnight(d)))
        .collect::<Result<_, _>>()?;
    if let Some(store) = store {
        for m in &models {
            store.save(m)?;
        }
    }

    let forecasts = dates
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let m = &models[i / s.retrain_interval_days as usize];
            let issue = d.and_hms_opt(s.issue_hour, 0, 0).expect("valid issue hour");
            let job = ForecastJob {
                issue_time: issue,
                horizon_hours: 24 - s.issue_hour,
                resolution: Resolution::Min15,
            };
            let ctx = ForecastContext::new(dataset, issue);
            check_no_lookahead(&ctx, |src| forecast(config, &job, m, src))
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RollingResult {
        forecasts,
        model_versions: models.into_iter().map(|m| m.version).collect(),
    })
}

/// Scores forecasts against measured irradiance at daylight steps that were
/// not imputed.
pub fn evaluate(dataset: &Dataset, forecasts: &[ForecastSeries]) -> Result<EvaluationReport, PipelineError> {
    let mut times: Vec<NaiveDateTime> = Vec::new();
    let mut actual = Vec::new();
    let mut predicted: [Vec<f64>; 4] = Default::default();
    for f in forecasts {
        if f.resolution != Resolution::Min15 {
            return Err(PipelineError::InvalidJob(
                "evaluation needs 15-minute forecasts".into(),
            ));
        }
        for (i, &t) in f.timestamps.iter().enumerate() {
            let Some(s) = dataset.get(t) else { continue };
            if s.imputed.irradiance || s.ideal_irradiance_wm2 <= 0.0 {
                continue;
            }
            times.push(t);
            actual.push(s.irradiance_wm2);
            for (k, name) in MODEL_NAMES.iter().enumerate() {
                predicted[k].push(f.model(name).expect("known model")[i]);
            }
        }
    }

    let intraday = MODEL_NAMES
        .iter()
        .zip(&predicted)
        .map(|(name, p)| {
            Ok(ModelMetrics {
                model: name.to_string(),
                metrics: metrics(&actual, p)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let step_hours = f64::from(STEP_MINUTES) / 60.0;
    let mut by_day: BTreeMap<NaiveDate, [f64; 5]> = BTreeMap::new();
    for (j, t) in times.iter().enumerate() {
        let e = by_day.entry(t.date()).or_default();
        e[0] += actual[j] * step_hours;
        for k in 0..4 {
            e[k + 1] += predicted[k][j] * step_hours;
        }
    }
    let daily = if by_day.len() >= 2 {
        let day_actual: Vec<f64> = by_day.values().map(|v| v[0]).collect();
        MODEL_NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let p: Vec<f64> = by_day.values().map(|v| v[k + 1]).collect();
                Ok(ModelMetrics {
                    model: name.to_string(),
                    metrics: metrics(&day_actual, &p)?,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?
    } else {
        Vec::new()
    };

    let hourly_errors = MODEL_NAMES
        .iter()
        .zip(&predicted)
        .map(|(name, p)| {
            Ok(HourlyErrors {
                model: name.to_string(),
                boxes: hourly_error_distribution(&actual, p, &times)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    Ok(EvaluationReport {
        steps: actual.len(),
        days: by_day.len(),
        intraday,
        daily,
        hourly_errors,
        lag: lag_plot_data(&actual, 1)?,
    })
}

/// Writes `report.json`, `hourly_errors_<model>.csv` and `lag_plot.csv`.
pub fn write_evaluation(dir: &Path, report: &EvaluationReport) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut json = serde_json::to_vec_pretty(report).expect("report serialises");
    json.push(b'\n');
    write_atomic(&dir.join("report.json"), &json)?;
    for h in &report.hourly_errors {
        let mut buf = Vec::new();
        write_hourly_csv(&mut buf, &h.boxes)?;
        write_atomic(&dir.join(format!("hourly_errors_{}.csv", h.model)), &buf)?;
    }
    let mut buf = Vec::new();
    write_lag_csv(&mut buf, &report.lag)?;
    write_atomic(&dir.join("lag_plot.csv"), &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::ts;
    use crate::pipeline::models::tests::{small_config, small_dataset};

    fn perfect(d: &Dataset, day: &str) -> ForecastSeries {
        let start = ts(day);
        let span = d.range(start, start + Duration::days(1));
        let irr: Vec<f64> = span.iter().map(|s| s.irradiance_wm2).collect();
        ForecastSeries {
            issue_time: start,
            horizon_hours: 24,
            resolution: Resolution::Min15,
            model_version: "x".into(),
            timestamps: span.iter().map(|s| s.timestamp).collect(),
            clear_sky_wm2: span.iter().map(|s| s.ideal_irradiance_wm2).collect(),
            ann_wm2: irr.clone(),
            svm_wm2: irr.clone(),
            cart_wm2: irr.clone(),
            ensemble_wm2: irr,
            module_temp_f: vec![0.0; span.len()],
            kw_ac: vec![0.0; span.len()],
            daily_irradiation_whm2: BTreeMap::new(),
        }
    }

    #[test]
    fn perfect_forecaster_scores_zero_error() {
        let d = small_dataset(3);
        let f = [perfect(&d, "2021-01-01T00:00:00"), perfect(&d, "2021-01-02T00:00:00")];
        let r = evaluate(&d, &f).unwrap();
        assert_eq!(r.days, 2);
        assert_eq!(r.intraday.len(), 4);
        assert_eq!(r.daily.len(), 4);
        for m in r.intraday.iter().chain(&r.daily) {
            assert_eq!(m.metrics.mae, 0.0);
            assert_eq!(m.metrics.mse, 0.0);
            assert_eq!(m.metrics.rmse, 0.0);
            assert_eq!(m.metrics.rrmse, 0.0);
            assert_eq!(m.metrics.r_squared, 1.0);
        }
        let names: Vec<&str> = r.intraday.iter().map(|m| m.model.as_str()).collect();
        assert_eq!(names, MODEL_NAMES);
        assert_eq!(r.lag.pairs.len(), r.steps - 1);
    }

    #[test]
    fn rolling_run_versions_and_outputs() {
        let d = small_dataset(16);
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let store = ModelStore::open(dir.path().join("models")).unwrap();
        let run = run_rolling(&d, &cfg, ts("2021-01-12T00:00:00").date(), 3, Some(&store)).unwrap();
        assert_eq!(run.model_versions.len(), 3);
        assert_eq!(store.versions().unwrap(), run.model_versions);
        assert_eq!(run.forecasts.len(), 3);
        assert_eq!(run.forecasts[0].len(), 19 * 4);

        let report = evaluate(&d, &run.forecasts).unwrap();
        let out = dir.path().join("eval");
        write_evaluation(&out, &report).unwrap();
        for f in ["report.json", "hourly_errors_ensemble.csv", "lag_plot.csv"] {
            assert!(out.join(f).exists(), "{f}");
        }
    }
}
