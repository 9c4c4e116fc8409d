//! Error metrics, correlation, variance-based sensitivity and plot-ready
//! diagnostics.

mod diagnostics;
mod metrics;
mod sobol;

pub use diagnostics::{
    hourly_error_distribution, lag_plot_data, quantile, write_hourly_csv, write_lag_csv, HourlyBox,
    LagPlotData,
};
pub use metrics::{
    correlation_table, mae, metrics, mse, pearson, r_squared, rrmse, write_correlation_csv,
    CorrelationColumns, CorrelationEntry, MetricReport, CORRELATION_VARIABLES,
};
pub use sobol::{ishigami, sobol_first_order, SobolReport, SOBOL_MIN_SAMPLES};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("inputs differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("{0} is constant; correlation undefined")]
    ConstantInput(String),
    #[error("predictions are all zero; RRMSE undefined")]
    ZeroPredictions,
    #[error("actuals are constant; R² undefined")]
    ConstantActuals,
    #[error("model output has zero variance; sensitivity indices undefined")]
    ZeroOutputVariance,
    #[error("invalid input range {index}: [{lo}, {hi}]")]
    InvalidRange { index: usize, lo: f64, hi: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("write failed: {0}")]
    Write(String),
}

pub(crate) fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<(), AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < min_len {
        return Err(AnalysisError::TooShort {
            needed: min_len,
            got: a.len(),
        });
    }
    if let Some(i) = (0..a.len()).find(|&i| !a[i].is_finite() || !b[i].is_finite()) {
        return Err(AnalysisError::NonFinite(i));
    }
    Ok(())
}

impl From<csv::Error> for AnalysisError {
    fn from(e: csv::Error) -> Self {
        AnalysisError::Write(e.to_string())
    }
}

impl From<std::io::Error> for AnalysisError {
    fn from(e: std::io::Error) -> Self {
        AnalysisError::Write(e.to_string())
    }
}
