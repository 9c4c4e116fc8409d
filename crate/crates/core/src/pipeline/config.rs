use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{io_err, PipelineError};
use crate::pv_estimation::PlantConfig;
use crate::regressors::{AnnParams, CartParams, SvrParams};
use crate::solar_geometry::{SiteLocation, SolarTimeOptions};

/// Site, plant, schedule, training and data settings, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub site: SiteLocation,
    pub plant: PlantConfig,
    pub schedule: ScheduleConfig,
    pub training: TrainingConfig,
    pub data: DataPaths,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            site: SiteLocation::miami(),
            plant: PlantConfig::default(),
            schedule: ScheduleConfig::default(),
            training: TrainingConfig::default(),
            data: DataPaths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub retrain_window_days: u32,
    pub retrain_interval_days: u32,
    pub min_window_days: u32,
    /// Local hour of the first daily forecast issue.
    pub issue_hour: u32,
    pub refresh_hours: u32,
    pub default_horizon_hours: u32,
    /// Forecasts are clamped to `[0, clamp_factor × clear-sky]`.
    pub clamp_factor: f64,
    pub use_equation_of_time: bool,
    /// Longest run of missing cells that ingestion will impute.
    pub max_gap_days: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            retrain_window_days: 365,
            retrain_interval_days: 1,
            min_window_days: 30,
            issue_hour: 5,
            refresh_hours: 1,
            default_horizon_hours: 24,
            clamp_factor: 1.1,
            use_equation_of_time: true,
            max_gap_days: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub seed: u64,
    /// Trailing fraction of the window used to weight the ensemble.
    pub validation_fraction: f64,
    /// Training rows are thinned by even striding above these counts.
    pub max_ann_samples: usize,
    pub max_svr_samples: usize,
    pub cart: CartParams,
    pub ann: AnnParams,
    pub svr: SvrParams,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            validation_fraction: 0.1,
            max_ann_samples: 4000,
            max_svr_samples: 1500,
            cart: CartParams::default(),
            ann: AnnParams::default(),
            svr: SvrParams::default(),
        }
    }
}

/// File locations. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub weather_csv: Option<PathBuf>,
    pub nwp_csv: Option<PathBuf>,
    pub production_csv: Option<PathBuf>,
    pub model_dir: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            weather_csv: None,
            nwp_csv: None,
            production_csv: None,
            model_dir: PathBuf::from("models"),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.data.resolve_against(base);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.plant.validate()?;
        let s = &self.schedule;
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if s.issue_hour >= 24 {
            return bad("schedule.issue_hour must be below 24");
        }
        if !(s.clamp_factor >= 1.0 && s.clamp_factor.is_finite()) {
            return bad("schedule.clamp_factor must be at least 1");
        }
        if s.min_window_days == 0 || s.retrain_window_days < s.min_window_days {
            return bad("schedule.retrain_window_days must be at least min_window_days (> 0)");
        }
        if s.retrain_interval_days == 0 || s.refresh_hours == 0 {
            return bad("schedule intervals must be positive");
        }
        let t = &self.training;
        if !(t.validation_fraction > 0.0 && t.validation_fraction < 0.5) {
            return bad("training.validation_fraction must be in (0, 0.5)");
        }
        if t.max_ann_samples < 10 || t.max_svr_samples < 10 {
            return bad("training sample caps must be at least 10");
        }
        Ok(())
    }

    pub fn solar_options(&self) -> SolarTimeOptions {
        SolarTimeOptions {
            use_equation_of_time: self.schedule.use_equation_of_time,
        }
    }
}

impl DataPaths {
    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.weather_csv, &mut self.nwp_csv, &mut self.production_csv]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.model_dir);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "15min")]
    Min15,
    #[serde(rename = "hourly")]
    Hourly,
}

impl Resolution {
    pub fn minutes(self) -> u32 {
        match self {
            Resolution::Min15 => 15,
            Resolution::Hourly => 60,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resolution::Min15 => "15min",
            Resolution::Hourly => "hourly",
        })
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "15min" | "15m" | "15" => Ok(Resolution::Min15),
            "hourly" | "60min" | "60m" | "60" | "1h" => Ok(Resolution::Hourly),
            other => Err(format!("unknown resolution '{other}' (use 15min or hourly)")),
        }
    }
}
