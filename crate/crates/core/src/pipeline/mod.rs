//! Ingestion, rolling retraining, forecasting, backcasting and evaluation.

mod backcast;
mod config;
mod dataset;
mod evaluate;
mod forecast;
mod guard;
mod io;
mod models;
mod synthetic;

pub use backcast::{backcast, find_gaps, BackcastResult, Gap};
pub use config::{Config, DataPaths, Resolution, ScheduleConfig, TrainingConfig};
pub use dataset::{
    build_dataset, ingest, Dataset, ImputedFlags, NwpPoint, NwpSeries, RawDataset, WeatherSample,
};
pub use evaluate::{
    evaluate, run_rolling, write_evaluation, EvaluationReport, HourlyErrors, ModelMetrics,
    RollingResult, MODEL_NAMES,
};
pub use forecast::{forecast, ForecastJob, ForecastSeries, MAX_HORIZON_HOURS};
pub use guard::{check_no_lookahead, FeatureSource, ForecastContext, HistoryGuard, StepInputs};
pub use io::{
    read_nwp_csv, read_production_csv, read_weather_csv, write_nwp_csv, write_production_csv,
    write_weather_csv, NwpRecord, ProductionRow, WeatherRow, NWP_HEADER, PRODUCTION_HEADER,
    WEATHER_HEADER,
};
pub use models::{
    load_file, retrain, sensitivity, MemberPredictions, ModelSet, ModelStore, FEATURE_NAMES,
    MODEL_FORMAT_VERSION,
};
pub use synthetic::{generate, SyntheticConfig, SyntheticData};

use std::path::PathBuf;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::data_prep::DataError;
use crate::pv_estimation::PvError;
use crate::regressors::ModelError;
use crate::solar_geometry::GeometryError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: header has {found} columns ({header}), expected {expected}: {expected_names}")]
    Header {
        file: String,
        found: usize,
        header: String,
        expected: usize,
        expected_names: String,
    },
    #[error("{file}: row {row}, column '{column}': {message}")]
    Schema {
        file: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{file}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { file: String, timestamp: NaiveDateTime },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("column '{column}' has a gap from {start} to {end} longer than the {max_days}-day imputation limit")]
    ImputationGap {
        column: String,
        start: NaiveDateTime,
        end: NaiveDateTime,
        max_days: u32,
    },
    #[error("training window holds {days} days of data, need at least {needed}")]
    InsufficientWindow { days: usize, needed: u32 },
    #[error("invalid forecast job: {0}")]
    InvalidJob(String),
    #[error("NWP data missing for {} hour(s): {}", .missing_hours.len(), format_hours(.missing_hours))]
    NwpGap { missing_hours: Vec<NaiveDateTime> },
    #[error("look-ahead: data at {requested} requested with cutoff {cutoff}")]
    LookaheadViolation {
        cutoff: NaiveDateTime,
        requested: NaiveDateTime,
    },
    #[error("gap {start} .. {end} is not bounded by valid data")]
    UnboundedGap { start: NaiveDateTime, end: NaiveDateTime },
    #[error("no recorded weather or NWP inputs at {0}")]
    NoWeatherInputs(NaiveDateTime),
    #[error("model file {path}: {message}")]
    ModelFormat { path: String, message: String },
    #[error("no model trained at or before {0}")]
    NoModel(NaiveDateTime),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Pv(#[from] PvError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn format_hours(hours: &[NaiveDateTime]) -> String {
    const SHOWN: usize = 12;
    let mut s: Vec<String> = hours.iter().take(SHOWN).map(|h| crate::format_timestamp(*h)).collect();
    if hours.len() > SHOWN {
        s.push(format!("... ({} more)", hours.len() - SHOWN));
    }
    s.join(", ")
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}
