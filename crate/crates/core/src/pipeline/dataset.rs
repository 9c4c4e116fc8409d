use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::io::{
    fmt_value, read_nwp_csv, read_production_csv, read_weather_csv, NwpRecord, ProductionRow,
    WeatherRow,
};
use super::{Config, PipelineError};
use crate::data_prep::{impute, remove_outliers, split_by_year, GappySeries};
use crate::solar_geometry::clear_sky_curve;
use crate::format_timestamp;
#[cfg(test)]
use crate::parse_timestamp;

pub(crate) const STEP_MINUTES: u32 = 15;
const STEPS_PER_DAY: usize = 96;

/// Parsed but uncleaned inputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawDataset {
    pub weather: Vec<WeatherRow>,
    pub nwp: Vec<NwpRecord>,
    pub production: Vec<ProductionRow>,
}

impl RawDataset {
    pub fn read(weather: &Path, nwp: &Path, production: &Path) -> Result<Self, PipelineError> {
        Ok(Self {
            weather: read_weather_csv(weather)?,
            nwp: read_nwp_csv(nwp)?,
            production: read_production_csv(production)?,
        })
    }
}

/// Which cells of a sample were filled by imputation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputedFlags {
    pub irradiance: bool,
    pub ambient_temp: bool,
    pub module_temp: bool,
    pub cloud_cover: bool,
    pub generation: bool,
}

impl ImputedFlags {
    pub fn any(&self) -> bool {
        self.irradiance || self.ambient_temp || self.module_temp || self.cloud_cover || self.generation
    }

    fn count(&self) -> usize {
        [
            self.irradiance,
            self.ambient_temp,
            self.module_temp,
            self.cloud_cover,
            self.generation,
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }
}

/// One cleaned 15-minute record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub timestamp: NaiveDateTime,
    pub irradiance_wm2: f64,
    pub ideal_irradiance_wm2: f64,
    pub ambient_temp_f: f64,
    pub module_temp_f: f64,
    pub cloud_cover_pct: f64,
    pub generation_kw: f64,
    /// NWP interpolated onto this step, when the NWP file covers it.
    pub nwp: Option<NwpPoint>,
    pub imputed: ImputedFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NwpPoint {
    pub ambient_temp_f: f64,
    pub cloud_cover_pct: f64,
}

/// Hourly NWP records. Cloud cover is held over each hour; ambient
/// temperature is interpolated linearly between consecutive hours.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NwpSeries {
    records: BTreeMap<NaiveDateTime, NwpRecord>,
}

fn hour_floor(t: NaiveDateTime) -> NaiveDateTime {
    t.date().and_hms_opt(t.hour(), 0, 0).expect("valid hour")
}

impl NwpSeries {
    pub fn new(records: impl IntoIterator<Item = NwpRecord>) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.timestamp, r)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &NwpRecord> {
        self.records.values()
    }

    pub fn at(&self, t: NaiveDateTime) -> Option<NwpPoint> {
        let h0 = hour_floor(t);
        let r0 = self.records.get(&h0)?;
        let ambient = if t == h0 {
            r0.ambient_temp_forecast_f
        } else {
            let r1 = self.records.get(&(h0 + Duration::hours(1)))?;
            let w = (t - h0).num_seconds() as f64 / 3600.0;
            r0.ambient_temp_forecast_f + w * (r1.ambient_temp_forecast_f - r0.ambient_temp_forecast_f)
        };
        Some(NwpPoint {
            ambient_temp_f: ambient,
            cloud_cover_pct: r0.cloud_cover_forecast_pct,
        })
    }

    /// Hours needed to serve 15-minute steps in `[start, end)` that have
    /// no record.
    pub fn missing_hours(&self, start: NaiveDateTime, end: NaiveDateTime) -> Vec<NaiveDateTime> {
        let mut needed = BTreeSet::new();
        let mut t = start;
        while t < end {
            let h = hour_floor(t);
            needed.insert(h);
            if t != h {
                needed.insert(h + Duration::hours(1));
            }
            t += Duration::minutes(i64::from(STEP_MINUTES));
        }
        needed
            .into_iter()
            .filter(|h| !self.records.contains_key(h))
            .collect()
    }
}

/// Cleaned dataset on a uniform 15-minute grid with no missing measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<WeatherSample>,
    pub nwp: NwpSeries,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Cells without a value: steps lacking NWP coverage.
    pub fn missing_cells(&self) -> usize {
        self.samples.iter().filter(|s| s.nwp.is_none()).count()
    }

    pub fn imputed_cells(&self) -> usize {
        self.samples.iter().map(|s| s.imputed.count()).sum()
    }

    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        self.samples.binary_search_by_key(&t, |s| s.timestamp).ok()
    }

    pub fn get(&self, t: NaiveDateTime) -> Option<&WeatherSample> {
        self.index_of(t).map(|i| &self.samples[i])
    }

    /// Samples with `start <= t < end`.
    pub fn range(&self, start: NaiveDateTime, end: NaiveDateTime) -> &[WeatherSample] {
        let lo = self.samples.partition_point(|s| s.timestamp < start);
        let hi = self.samples.partition_point(|s| s.timestamp < end);
        &self.samples[lo..hi.max(lo)]
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.samples.first().map(|s| s.timestamp.date())
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.samples.last().map(|s| s.timestamp.date())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PipelineError> {
        let file = std::fs::File::create(path).map_err(super::io_err(path))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let wrap = |e: csv::Error| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        };
        w.write_record([
            "timestamp_iso8601",
            "irradiance_wm2",
            "ideal_irradiance_wm2",
            "ambient_temp_f",
            "module_temp_f",
            "cloud_cover_pct",
            "generation_kw",
            "nwp_ambient_temp_f",
            "nwp_cloud_cover_pct",
            "imputed",
        ])
        .map_err(wrap)?;
        for s in &self.samples {
            w.write_record([
                format_timestamp(s.timestamp),
                fmt_value(Some(s.irradiance_wm2)),
                fmt_value(Some(s.ideal_irradiance_wm2)),
                fmt_value(Some(s.ambient_temp_f)),
                fmt_value(Some(s.module_temp_f)),
                fmt_value(Some(s.cloud_cover_pct)),
                fmt_value(Some(s.generation_kw)),
                fmt_value(s.nwp.map(|n| n.ambient_temp_f)),
                fmt_value(s.nwp.map(|n| n.cloud_cover_pct)),
                u8::from(s.imputed.any()).to_string(),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(super::io_err(path))?;
        Ok(())
    }
}

/// Reads the three input files and builds the cleaned dataset.
pub fn ingest(
    config: &Config,
    weather: &Path,
    nwp: &Path,
    production: &Path,
) -> Result<Dataset, PipelineError> {
    build_dataset(RawDataset::read(weather, nwp, production)?, config)
}

fn on_grid(t: NaiveDateTime) -> bool {
    t.second() == 0 && t.nanosecond() == 0 && t.minute().is_multiple_of(STEP_MINUTES)
}

/// Places the raw rows on a uniform 15-minute grid spanning the weather
/// file. Cleaning order per column: physical range fixes, outlier removal,
/// gap-length check, then imputation from the same calendar slot of other
/// years with forward/back fill as fallback.
pub fn build_dataset(raw: RawDataset, config: &Config) -> Result<Dataset, PipelineError> {
    if raw.weather.is_empty() {
        return Err(PipelineError::Config("weather file has no rows".into()));
    }
    for r in &raw.weather {
        if !on_grid(r.timestamp) {
            return Err(PipelineError::Schema {
                file: "weather".into(),
                row: 0,
                column: "timestamp_iso8601".into(),
                message: format!("{} is not on the 15-minute grid", r.timestamp),
            });
        }
    }
    let start = raw.weather[0].timestamp;
    let end = raw.weather[raw.weather.len() - 1].timestamp + Duration::minutes(i64::from(STEP_MINUTES));
    let n = ((end - start).num_minutes() / i64::from(STEP_MINUTES)) as usize;
    let grid: Vec<NaiveDateTime> = (0..n)
        .map(|i| start + Duration::minutes(i64::from(STEP_MINUTES) * i as i64))
        .collect();
    let index = |t: NaiveDateTime| -> Option<usize> {
        let d = (t - start).num_minutes();
        (d >= 0 && on_grid(t) && (d as usize / STEP_MINUTES as usize) < n).then(|| d as usize / STEP_MINUTES as usize)
    };

    let mut cols: [Vec<Option<f64>>; 5] = std::array::from_fn(|_| vec![None; n]);
    for r in &raw.weather {
        let i = index(r.timestamp).expect("weather rows define the grid");
        cols[0][i] = r.irradiance_wm2.map(|v| v.max(0.0));
        cols[1][i] = r.ambient_temp_f;
        cols[2][i] = r.module_temp_f;
        cols[3][i] = r.cloud_cover_pct.filter(|c| (0.0..=100.0).contains(c));
    }
    for p in &raw.production {
        if let Some(i) = index(p.timestamp) {
            cols[4][i] = p.generation_kw.map(|v| v.max(0.0));
        }
    }

    const NAMES: [&str; 5] = [
        "irradiance_wm2",
        "ambient_temp_f",
        "module_temp_f",
        "cloud_cover_pct",
        "generation_kw",
    ];
    let max_run = config.schedule.max_gap_days as usize * STEPS_PER_DAY;
    let mut filled: Vec<Vec<f64>> = Vec::with_capacity(5);
    let mut flags: Vec<Vec<bool>> = Vec::with_capacity(5);
    for (c, col) in cols.iter().enumerate() {
        let cleaned = remove_outliers(col);
        check_gaps(&cleaned, &grid, max_run, NAMES[c], config.schedule.max_gap_days)?;
        let series = GappySeries {
            timestamps: grid.clone(),
            values: cleaned,
        };
        let history = split_by_year(&series);
        let out = impute(&series, &history)?;
        flags.push(series.values.iter().map(Option::is_none).collect());
        filled.push(out.values);
    }

    let ideal = clear_sky_curve(&config.site, start, end, STEP_MINUTES, config.solar_options())?;
    let nwp = NwpSeries::new(raw.nwp);
    let samples = (0..n)
        .map(|i| WeatherSample {
            timestamp: grid[i],
            irradiance_wm2: filled[0][i],
            ideal_irradiance_wm2: ideal.ghi_wm2[i],
            ambient_temp_f: filled[1][i],
            module_temp_f: filled[2][i],
            cloud_cover_pct: filled[3][i],
            generation_kw: filled[4][i],
            nwp: nwp.at(grid[i]),
            imputed: ImputedFlags {
                irradiance: flags[0][i],
                ambient_temp: flags[1][i],
                module_temp: flags[2][i],
                cloud_cover: flags[3][i],
                generation: flags[4][i],
            },
        })
        .collect();
    Ok(Dataset { samples, nwp })
}

fn check_gaps(
    values: &[Option<f64>],
    grid: &[NaiveDateTime],
    max_run: usize,
    column: &str,
    max_days: u32,
) -> Result<(), PipelineError> {
    let mut run_start = None;
    for i in 0..=values.len() {
        let missing = i < values.len() && values[i].is_none();
        match (missing, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s > max_run {
                    return Err(PipelineError::ImputationGap {
                        column: column.into(),
                        start: grid[s],
                        end: grid[i - 1],
                        max_days,
                    });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) fn ts(s: &str) -> NaiveDateTime {
    parse_timestamp(s).expect("valid literal timestamp")
}
