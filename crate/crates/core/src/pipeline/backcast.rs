use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, WeatherSample};
use super::io::{fmt_value, write_atomic};
use super::{Config, ModelSet, PipelineError};
use crate::{format_timestamp, Matrix};

/// Run of imputed irradiance, `start <= t < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

/// Irradiance over the whole dataset with gaps replaced by model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackcastResult {
    pub timestamps: Vec<NaiveDateTime>,
    pub irradiance_wm2: Vec<f64>,
    /// True where the value came from the models.
    pub imputed: Vec<bool>,
    pub gaps: Vec<Gap>,
    pub model_version: String,
}

/// Runs of samples whose irradiance was not measured. A gap touching either
/// end of the dataset runs to the first or one past the last timestamp.
pub fn find_gaps(dataset: &Dataset) -> Vec<Gap> {
    let s = &dataset.samples;
    let mut gaps = Vec::new();
    let mut i = 0;
    while i < s.len() {
        if !s[i].imputed.irradiance {
            i += 1;
            continue;
        }
        let j = (i..s.len()).find(|&j| !s[j].imputed.irradiance).unwrap_or(s.len());
        let end = match s.get(j) {
            Some(x) => x.timestamp,
            None => s[j - 1].timestamp + chrono::Duration::minutes(15),
        };
        gaps.push(Gap {
            start: s[i].timestamp,
            end,
        });
        i = j;
    }
    gaps
}

/// Weather at a step: measured where both inputs were recorded, NWP
/// otherwise.
fn inputs(s: &WeatherSample) -> Option<(f64, f64)> {
    if !s.imputed.ambient_temp && !s.imputed.cloud_cover {
        Some((s.ambient_temp_f, s.cloud_cover_pct))
    } else {
        s.nwp.map(|n| (n.ambient_temp_f, n.cloud_cover_pct))
    }
}

/// Replaces the irradiance in each gap by the clamped ensemble estimate.
/// Every gap must have a measured sample on both sides.
pub fn backcast(
    dataset: &Dataset,
    config: &Config,
    models: &ModelSet,
    gaps: &[Gap],
) -> Result<BackcastResult, PipelineError> {
    let samples = &dataset.samples;
    let mut out = BackcastResult {
        timestamps: samples.iter().map(|s| s.timestamp).collect(),
        irradiance_wm2: samples.iter().map(|s| s.irradiance_wm2).collect(),
        imputed: vec![false; samples.len()],
        gaps: gaps.to_vec(),
        model_version: models.version.clone(),
    };
    for gap in gaps {
        if gap.start >= gap.end {
            continue;
        }
        let lo = samples.partition_point(|s| s.timestamp < gap.start);
        let hi = samples.partition_point(|s| s.timestamp < gap.end);
        let before = lo.checked_sub(1).map(|i| &samples[i]);
        let after = samples.get(hi);
        let bounded = |s: Option<&WeatherSample>| s.is_some_and(|s| !s.imputed.irradiance);
        if !bounded(before) || !bounded(after) {
            return Err(PipelineError::UnboundedGap {
                start: gap.start,
                end: gap.end,
            });
        }

        let span = &samples[lo..hi];
        let mut raw = Matrix::zeros(span.len(), 3);
        for (k, s) in span.iter().enumerate() {
            let (ambient, cloud) = inputs(s).ok_or(PipelineError::NoWeatherInputs(s.timestamp))?;
            let mt = models.module_temp.predict_one(ambient);
            raw.row_mut(k).copy_from_slice(&[s.ideal_irradiance_wm2, cloud, mt]);
        }
        let p = models.predict_members(&raw)?;
        let factor = config.schedule.clamp_factor;
        let clamp = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(span)
                .map(|(&x, s)| {
                    let r0 = s.ideal_irradiance_wm2;
                    if r0 <= 0.0 {
                        0.0
                    } else {
                        x.clamp(0.0, factor * r0)
                    }
                })
                .collect()
        };
        let est = models
            .ensemble
            .combine_series(&[clamp(&p.ann), clamp(&p.svr), clamp(&p.cart)])?;
        for (k, v) in est.into_iter().enumerate() {
            out.irradiance_wm2[lo + k] = v;
            out.imputed[lo + k] = true;
        }
    }
    Ok(out)
}

impl BackcastResult {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["timestamp_iso8601", "irradiance_wm2", "imputed"])
            .expect("in-memory write");
        for i in 0..self.timestamps.len() {
            w.write_record([
                format_timestamp(self.timestamps[i]),
                fmt_value(Some(self.irradiance_wm2[i])),
                u8::from(self.imputed[i]).to_string(),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        write_atomic(path, &self.to_csv())
    }
}
