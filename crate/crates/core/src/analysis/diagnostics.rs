use std::collections::BTreeMap;
use std::io::Write;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagPlotData {
    pub lag: usize,
    pub pairs: Vec<(f64, f64)>,
}

pub fn lag_plot_data(series: &[f64], lag: usize) -> Result<LagPlotData, AnalysisError> {
    if lag == 0 || series.len() <= lag {
        return Err(AnalysisError::TooShort {
            needed: lag.max(1) + 1,
            got: series.len(),
        });
    }
    Ok(LagPlotData {
        lag,
        pairs: series.iter().zip(&series[lag..]).map(|(a, b)| (*a, *b)).collect(),
    })
}

pub fn write_lag_csv<W: Write>(out: W, data: &LagPlotData) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_t", format!("x_t_plus_{}", data.lag).as_str()])?;
    for (a, b) in &data.pairs {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Box-and-whisker summary of signed errors (predicted − actual) for one hour
/// of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyBox {
    pub hour: u32,
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme errors within 1.5 IQR of the quartiles.
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data (`h = (n−1)p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn hourly_error_distribution(
    actual: &[f64],
    predicted: &[f64],
    timestamps: &[NaiveDateTime],
) -> Result<Vec<HourlyBox>, AnalysisError> {
    super::check_pair(actual, predicted, 0)?;
    if timestamps.len() != actual.len() {
        return Err(AnalysisError::LengthMismatch {
            left: timestamps.len(),
            right: actual.len(),
        });
    }
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for ((a, p), t) in actual.iter().zip(predicted).zip(timestamps) {
        groups.entry(t.hour()).or_default().push(p - a);
    }
    Ok(groups
        .into_iter()
        .map(|(hour, mut e)| {
            e.sort_by(f64::total_cmp);
            let q1 = quantile(&e, 0.25);
            let median = quantile(&e, 0.5);
            let q3 = quantile(&e, 0.75);
            let iqr = q3 - q1;
            let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
            let inside = || e.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
            HourlyBox {
                hour,
                count: e.len(),
                q1,
                median,
                q3,
                lower_whisker: inside().fold(f64::INFINITY, f64::min),
                upper_whisker: inside().fold(f64::NEG_INFINITY, f64::max),
                outliers: e.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
            }
        })
        .collect())
}

pub fn write_hourly_csv<W: Write>(out: W, boxes: &[HourlyBox]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "hour",
        "count",
        "lower_whisker",
        "q1",
        "median",
        "q3",
        "upper_whisker",
        "outliers",
    ])?;
    for b in boxes {
        let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
        w.write_record([
            b.hour.to_string(),
            b.count.to_string(),
            b.lower_whisker.to_string(),
            b.q1.to_string(),
            b.median.to_string(),
            b.q3.to_string(),
            b.upper_whisker.to_string(),
            outliers.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
