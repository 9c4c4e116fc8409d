use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::dataset::STEP_MINUTES;
use super::guard::FeatureSource;
use super::io::{fmt_value, write_atomic};
use super::{Config, ModelSet, PipelineError, Resolution};
use crate::pv_estimation::estimate_kw_ac;
use crate::solar_geometry::clear_sky_curve;
use crate::{format_timestamp, Matrix};

/// Seven days.
pub const MAX_HORIZON_HOURS: u32 = 168;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastJob {
    pub issue_time: NaiveDateTime,
    pub horizon_hours: u32,
    pub resolution: Resolution,
}

impl ForecastJob {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidJob(m));
        if self.horizon_hours == 0 || self.horizon_hours > MAX_HORIZON_HOURS {
            return bad(format!(
                "horizon {} h is outside 1..={MAX_HORIZON_HOURS} h",
                self.horizon_hours
            ));
        }
        let t = self.issue_time;
        if t.second() != 0 || t.nanosecond() != 0 || !t.minute().is_multiple_of(self.resolution.minutes()) {
            return bad(format!(
                "issue time {t} is not aligned to the {} grid",
                self.resolution
            ));
        }
        Ok(())
    }
}

/// Forecast output. Irradiance columns are W/m² at the job resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub issue_time: NaiveDateTime,
    pub horizon_hours: u32,
    pub resolution: Resolution,
    pub model_version: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub clear_sky_wm2: Vec<f64>,
    pub ann_wm2: Vec<f64>,
    pub svm_wm2: Vec<f64>,
    pub cart_wm2: Vec<f64>,
    pub ensemble_wm2: Vec<f64>,
    pub module_temp_f: Vec<f64>,
    pub kw_ac: Vec<f64>,
    /// Ensemble irradiation per calendar day covered, Whr/m².
    pub daily_irradiation_whm2: BTreeMap<NaiveDate, f64>,
}

pub const FORECAST_HEADER: [&str; 8] = [
    "timestamp_iso8601",
    "clear_sky_wm2",
    "ann_wm2",
    "svm_wm2",
    "cart_wm2",
    "ensemble_wm2",
    "module_temp_f",
    "kw_ac",
];

impl ForecastSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Series for `name` in `svm`, `cart`, `ann`, `ensemble`.
    pub fn model(&self, name: &str) -> Option<&[f64]> {
        match name {
            "svm" => Some(&self.svm_wm2),
            "cart" => Some(&self.cart_wm2),
            "ann" => Some(&self.ann_wm2),
            "ensemble" => Some(&self.ensemble_wm2),
            _ => None,
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(FORECAST_HEADER).expect("in-memory write");
        for i in 0..self.len() {
            let cols = [
                &self.clear_sky_wm2,
                &self.ann_wm2,
                &self.svm_wm2,
                &self.cart_wm2,
                &self.ensemble_wm2,
                &self.module_temp_f,
                &self.kw_ac,
            ];
            let mut rec = vec![format_timestamp(self.timestamps[i])];
            rec.extend(cols.iter().map(|c| fmt_value(Some(c[i]))));
            w.write_record(&rec).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        write_atomic(path, &self.to_csv())
    }

    pub fn write_daily_csv(&self, path: &Path) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["date", "ensemble_irradiation_whm2"]).expect("in-memory write");
        for (d, v) in &self.daily_irradiation_whm2 {
            w.write_record([d.to_string(), fmt_value(Some(*v))])
                .expect("in-memory write");
        }
        write_atomic(path, &w.into_inner().expect("in-memory flush"))
    }
}

fn clamp(v: f64, r0: f64, factor: f64) -> f64 {
    if r0 <= 0.0 {
        0.0
    } else {
        v.clamp(0.0, factor * r0)
    }
}

fn f_to_c(f: f64) -> f64 {
    (f - 32.0) * 5.0 / 9.0
}

/// Mean of each run of `k` values.
fn block_mean(v: &[f64], k: usize) -> Vec<f64> {
    v.chunks(k).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Runs the models over the horizon on 15-minute steps.
///
/// Member outputs are clamped to `[0, clamp_factor × R0]` (exactly zero
/// when R0 is zero) before the ensemble combines them. Hourly output is
/// the mean of the four quarter hours starting on the hour.
pub fn forecast(
    config: &Config,
    job: &ForecastJob,
    models: &ModelSet,
    source: &dyn FeatureSource,
) -> Result<ForecastSeries, PipelineError> {
    job.validate()?;
    if models.trained_through > job.issue_time {
        return Err(PipelineError::LookaheadViolation {
            cutoff: job.issue_time,
            requested: models.trained_through,
        });
    }
    let start = job.issue_time;
    let end = start + Duration::hours(i64::from(job.horizon_hours));
    let missing = source.missing_hours(start, end);
    if !missing.is_empty() {
        return Err(PipelineError::NwpGap {
            missing_hours: missing,
        });
    }

    let clear = clear_sky_curve(&config.site, start, end, STEP_MINUTES, config.solar_options())?;
    let n = clear.len();
    let mut raw = Matrix::zeros(n, 3);
    let mut module_temp = Vec::with_capacity(n);
    for (i, &t) in clear.timestamps.iter().enumerate() {
        let inputs = source
            .step_inputs(t)?
            .ok_or(PipelineError::NwpGap {
                missing_hours: vec![t.date().and_hms_opt(t.hour(), 0, 0).expect("valid hour")],
            })?;
        let mt = models.module_temp.predict_one(inputs.ambient_temp_f);
        module_temp.push(mt);
        raw.row_mut(i)
            .copy_from_slice(&[clear.ghi_wm2[i], inputs.cloud_cover_pct, mt]);
    }

    let p = models.predict_members(&raw)?;
    let factor = config.schedule.clamp_factor;
    let clamp_all = |v: &[f64]| -> Vec<f64> {
        v.iter().zip(&clear.ghi_wm2).map(|(&x, &r0)| clamp(x, r0, factor)).collect()
    };
    let (ann, svm, cart) = (clamp_all(&p.ann), clamp_all(&p.svr), clamp_all(&p.cart));
    let ensemble = models
        .ensemble
        .combine_series(&[ann.clone(), svm.clone(), cart.clone()])?;
    let kw_ac = ensemble
        .iter()
        .zip(&module_temp)
        .map(|(&r, &mt)| estimate_kw_ac(&config.plant, r, f_to_c(mt)))
        .collect::<Result<Vec<_>, _>>()?;

    let step_hours = f64::from(STEP_MINUTES) / 60.0;
    let mut daily = BTreeMap::new();
    for (t, r) in clear.timestamps.iter().zip(&ensemble) {
        *daily.entry(t.date()).or_insert(0.0) += r * step_hours;
    }

    let mut out = ForecastSeries {
        issue_time: job.issue_time,
        horizon_hours: job.horizon_hours,
        resolution: job.resolution,
        model_version: models.version.clone(),
        timestamps: clear.timestamps.clone(),
        clear_sky_wm2: clear.ghi_wm2.clone(),
        ann_wm2: ann,
        svm_wm2: svm,
        cart_wm2: cart,
        ensemble_wm2: ensemble,
        module_temp_f: module_temp,
        kw_ac,
        daily_irradiation_whm2: daily,
    };
    if job.resolution == Resolution::Hourly {
        let k = (Resolution::Hourly.minutes() / STEP_MINUTES) as usize;
        out.timestamps = out.timestamps.iter().step_by(k).copied().collect();
        for v in [
            &mut out.clear_sky_wm2,
            &mut out.ann_wm2,
            &mut out.svm_wm2,
            &mut out.cart_wm2,
            &mut out.ensemble_wm2,
            &mut out.module_temp_f,
            &mut out.kw_ac,
        ] {
            *v = block_mean(v, k);
        }
    }
    Ok(out)
}
