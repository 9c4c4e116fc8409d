//! Time-fenced access to measured data.
//!
//! Everything a forecast issued at `T` reads from measurements goes through a
//! [`HistoryGuard`] with cutoff `T`. Reads at or after the cutoff fail and are
//! logged, so a forecast that silently swallows the error is still caught by
//! [`check_no_lookahead`].

use std::sync::Mutex;

use chrono::NaiveDateTime;

use super::dataset::{Dataset, NwpSeries, WeatherSample};
use super::PipelineError;

pub struct HistoryGuard<'a> {
    dataset: &'a Dataset,
    cutoff: NaiveDateTime,
    violations: Mutex<Vec<NaiveDateTime>>,
}

impl<'a> HistoryGuard<'a> {
    pub fn new(dataset: &'a Dataset, cutoff: NaiveDateTime) -> Self {
        Self {
            dataset,
            cutoff,
            violations: Mutex::new(Vec::new()),
        }
    }

    pub fn cutoff(&self) -> NaiveDateTime {
        self.cutoff
    }

    fn admit(&self, t: NaiveDateTime) -> Result<(), PipelineError> {
        if t >= self.cutoff {
            self.violations.lock().expect("guard log").push(t);
            return Err(PipelineError::LookaheadViolation {
                cutoff: self.cutoff,
                requested: t,
            });
        }
        Ok(())
    }

    /// The measured sample at `t`, if any.
    pub fn measurement(&self, t: NaiveDateTime) -> Result<Option<&'a WeatherSample>, PipelineError> {
        self.admit(t)?;
        Ok(self.dataset.get(t))
    }

    /// Samples in `[start, end)`; `end` may not pass the cutoff.
    pub fn window(&self, start: NaiveDateTime, end: NaiveDateTime) -> Result<&'a [WeatherSample], PipelineError> {
        if end > self.cutoff {
            self.admit(end - chrono::Duration::seconds(1))?;
        }
        Ok(self.dataset.range(start, end))
    }

    pub fn violations(&self) -> Vec<NaiveDateTime> {
        self.violations.lock().expect("guard log").clone()
    }
}

/// Weather inputs for one forecast step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInputs {
    pub ambient_temp_f: f64,
    pub cloud_cover_pct: f64,
}

/// Supplies per-step inputs to the forecaster.
pub trait FeatureSource: Sync {
    /// Inputs for step `t`, or `Ok(None)` when no forecast covers it.
    fn step_inputs(&self, t: NaiveDateTime) -> Result<Option<StepInputs>, PipelineError>;

    /// Hours whose absence leaves steps in `[start, end)` without inputs.
    fn missing_hours(&self, start: NaiveDateTime, end: NaiveDateTime) -> Vec<NaiveDateTime>;

    /// Instant after which measurements are off limits.
    fn cutoff(&self) -> NaiveDateTime;

    /// Future-data reads attempted so far.
    fn lookahead_violations(&self) -> Vec<NaiveDateTime>;
}

/// Standard source: NWP for the inputs, guarded history for anything
/// measured.
pub struct ForecastContext<'a> {
    pub nwp: &'a NwpSeries,
    pub history: HistoryGuard<'a>,
}

impl<'a> ForecastContext<'a> {
    pub fn new(dataset: &'a Dataset, issue_time: NaiveDateTime) -> Self {
        Self {
            nwp: &dataset.nwp,
            history: HistoryGuard::new(dataset, issue_time),
        }
    }
}

impl FeatureSource for ForecastContext<'_> {
    fn step_inputs(&self, t: NaiveDateTime) -> Result<Option<StepInputs>, PipelineError> {
        Ok(self.nwp.at(t).map(|p| StepInputs {
            ambient_temp_f: p.ambient_temp_f,
            cloud_cover_pct: p.cloud_cover_pct,
        }))
    }

    fn missing_hours(&self, start: NaiveDateTime, end: NaiveDateTime) -> Vec<NaiveDateTime> {
        self.nwp.missing_hours(start, end)
    }

    fn cutoff(&self) -> NaiveDateTime {
        self.history.cutoff()
    }

    fn lookahead_violations(&self) -> Vec<NaiveDateTime> {
        self.history.violations()
    }
}

/// Runs `run` and fails if it errored with, or logged, a future read.
pub fn check_no_lookahead<T>(
    source: &dyn FeatureSource,
    run: impl FnOnce(&dyn FeatureSource) -> Result<T, PipelineError>,
) -> Result<T, PipelineError> {
    let out = run(source)?;
    match source.lookahead_violations().first() {
        Some(&requested) => Err(PipelineError::LookaheadViolation {
            cutoff: source.cutoff(),
            requested,
        }),
        None => Ok(out),
    }
}
