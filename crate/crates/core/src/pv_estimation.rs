//! Irradiance to AC power through the combined derate factors.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_prep::{uniform_step_minutes, TimeSeries};

/// Standard test-condition module temperature.
pub const STC_MODULE_TEMP_C: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PvError {
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),
    #[error("irradiance must be non-negative and finite, got {0}")]
    InvalidIrradiance(f64),
    #[error("module temperature must be finite, got {0}")]
    InvalidTemperature(f64),
    #[error("series lengths differ: irradiance {irradiance}, module temperature {module_temp}")]
    LengthMismatch { irradiance: usize, module_temp: usize },
    #[error("timestamps diverge at index {index}: {irradiance} vs {module_temp}")]
    TimestampMismatch {
        index: usize,
        irradiance: NaiveDateTime,
        module_temp: NaiveDateTime,
    },
    #[error("series cadence is not uniform{0}")]
    NonUniformCadence(String),
}

/// Plant description. Defaults reproduce the 1.4 MW DC Miami canopy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub dc_rating_kw: f64,
    pub ac_capacity_kw: f64,
    pub inverter_efficiency: f64,
    pub soiling_derate: f64,
    pub cabling_derate: f64,
    pub mismatch_derate: f64,
    /// Power temperature coefficient, percent per °C (negative for silicon).
    pub temp_coefficient_pct_per_c: f64,
    /// Reference module temperature, °C.
    pub module_temp_avg_c: f64,
    pub module_efficiency_pct: f64,
    pub tilt_deg: f64,
    pub array_azimuth_deg: f64,
    pub module_count: u32,
    pub inverter_count: u32,
    pub strings: u32,
    pub modules_per_string: u32,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            dc_rating_kw: 1400.0,
            ac_capacity_kw: 1104.0,
            inverter_efficiency: 0.98,
            soiling_derate: 0.9,
            cabling_derate: 0.99,
            mismatch_derate: 0.97,
            temp_coefficient_pct_per_c: -0.5,
            module_temp_avg_c: STC_MODULE_TEMP_C,
            module_efficiency_pct: 16.5,
            tilt_deg: 5.0,
            // listed as 2678° in the plant sheet; unused by the estimator
            array_azimuth_deg: 268.0,
            module_count: 4480,
            inverter_count: 46,
            strings: 224,
            modules_per_string: 20,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PvError> {
        for (name, v) in [
            ("inverter_efficiency", self.inverter_efficiency),
            ("soiling_derate", self.soiling_derate),
            ("cabling_derate", self.cabling_derate),
            ("mismatch_derate", self.mismatch_derate),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(PvError::InvalidConfig(format!("{name} = {v} not in (0, 1]")));
            }
        }
        if !(self.dc_rating_kw > 0.0 && self.dc_rating_kw.is_finite()) {
            return Err(PvError::InvalidConfig(format!(
                "dc_rating_kw = {} must be positive",
                self.dc_rating_kw
            )));
        }
        if !(self.ac_capacity_kw > 0.0 && self.ac_capacity_kw <= self.dc_rating_kw) {
            return Err(PvError::InvalidConfig(format!(
                "ac_capacity_kw = {} must be positive and at most dc_rating_kw",
                self.ac_capacity_kw
            )));
        }
        if !self.temp_coefficient_pct_per_c.is_finite() || !self.module_temp_avg_c.is_finite() {
            return Err(PvError::InvalidConfig("temperature terms must be finite".into()));
        }
        Ok(())
    }

    /// Product of soiling, cabling, mismatch and inverter efficiency.
    pub fn combined_derate(&self) -> f64 {
        self.soiling_derate * self.cabling_derate * self.mismatch_derate * self.inverter_efficiency
    }

    fn temperature_factor(&self, module_temp_c: f64) -> f64 {
        1.0 + self.temp_coefficient_pct_per_c / 100.0 * (module_temp_c - self.module_temp_avg_c)
    }
}

/// AC output in kW for one irradiance / module temperature pair.
pub fn estimate_kw_ac(
    config: &PlantConfig,
    irradiance_wm2: f64,
    module_temp_c: f64,
) -> Result<f64, PvError> {
    config.validate()?;
    kw_ac_unchecked(config, irradiance_wm2, module_temp_c)
}

fn kw_ac_unchecked(config: &PlantConfig, irradiance_wm2: f64, module_temp_c: f64) -> Result<f64, PvError> {
    if !(irradiance_wm2 >= 0.0 && irradiance_wm2.is_finite()) {
        return Err(PvError::InvalidIrradiance(irradiance_wm2));
    }
    if !module_temp_c.is_finite() {
        return Err(PvError::InvalidTemperature(module_temp_c));
    }
    let kw = config.dc_rating_kw
        * (irradiance_wm2 / 1000.0)
        * config.temperature_factor(module_temp_c)
        * config.combined_derate();
    Ok(kw.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub timestamps: Vec<NaiveDateTime>,
    pub kw_ac: Vec<f64>,
    pub daily_irradiation_whm2: BTreeMap<NaiveDate, f64>,
    pub daily_energy_kwh: BTreeMap<NaiveDate, f64>,
    pub step_minutes: u32,
}

/// Per-step estimate plus calendar-day aggregates. Both series must share
/// timestamps and a uniform cadence.
pub fn estimate_series(
    config: &PlantConfig,
    irradiance: &TimeSeries,
    module_temp_c: &TimeSeries,
) -> Result<PowerEstimate, PvError> {
    config.validate()?;
    if irradiance.len() != module_temp_c.len() {
        return Err(PvError::LengthMismatch {
            irradiance: irradiance.len(),
            module_temp: module_temp_c.len(),
        });
    }
    if let Some(index) = irradiance
        .timestamps
        .iter()
        .zip(&module_temp_c.timestamps)
        .position(|(a, b)| a != b)
    {
        return Err(PvError::TimestampMismatch {
            index,
            irradiance: irradiance.timestamps[index],
            module_temp: module_temp_c.timestamps[index],
        });
    }
    let step_minutes = series_step(&irradiance.timestamps, None)?;
    let kw_ac = irradiance
        .values
        .iter()
        .zip(&module_temp_c.values)
        .map(|(&r, &t)| kw_ac_unchecked(config, r, t))
        .collect::<Result<Vec<_>, _>>()?;
    let hours = f64::from(step_minutes) / 60.0;
    Ok(PowerEstimate {
        daily_irradiation_whm2: daily_sum(&irradiance.timestamps, &irradiance.values, hours),
        daily_energy_kwh: daily_sum(&irradiance.timestamps, &kw_ac, hours),
        timestamps: irradiance.timestamps.clone(),
        kw_ac,
        step_minutes,
    })
}

/// Whr/m² per calendar day for a 15-minute irradiance series.
pub fn daily_irradiation(series: &TimeSeries) -> Result<BTreeMap<NaiveDate, f64>, PvError> {
    let step = series_step(&series.timestamps, Some(15))?;
    Ok(daily_sum(
        &series.timestamps,
        &series.values,
        f64::from(step) / 60.0,
    ))
}

/// Like [`daily_irradiation`] but for any uniform cadence.
pub fn daily_irradiation_any_step(series: &TimeSeries) -> Result<BTreeMap<NaiveDate, f64>, PvError> {
    let step = series_step(&series.timestamps, None)?;
    Ok(daily_sum(
        &series.timestamps,
        &series.values,
        f64::from(step) / 60.0,
    ))
}

fn series_step(timestamps: &[NaiveDateTime], required: Option<u32>) -> Result<u32, PvError> {
    let step = match timestamps.len() {
        0 | 1 => required.unwrap_or(15),
        _ => uniform_step_minutes(timestamps).map_err(|i| {
            PvError::NonUniformCadence(format!(" (interval ending at index {i})"))
        })?,
    };
    match required {
        Some(r) if r != step => Err(PvError::NonUniformCadence(format!(
            ": expected {r}-minute steps, found {step}"
        ))),
        _ => Ok(step),
    }
}

fn daily_sum(timestamps: &[NaiveDateTime], values: &[f64], hours: f64) -> BTreeMap<NaiveDate, f64> {
    let mut out = BTreeMap::new();
    for (t, v) in timestamps.iter().zip(values) {
        *out.entry(t.date()).or_insert(0.0) += v * hours;
    }
    out
}
