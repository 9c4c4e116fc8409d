//! Solar irradiance and PV generation forecasting.
//!
//! A clear-sky model built from solar geometry supplies the ideal irradiance
//! that, together with forecast cloud cover and module temperature, feeds
//! three trainable regressors (a variance-splitting regression tree, a
//! sigmoid feed-forward network and an ε-support-vector regressor). Their
//! outputs are blended with inverse-RRMSE weights and converted to AC power
//! with a derate-factor estimator.
//!
//! All timestamps are naive local *standard* time for the site.

pub mod analysis;
pub mod data_prep;
pub mod matrix;
pub mod pipeline;
pub mod pv_estimation;
pub mod regressors;
pub mod solar_geometry;

pub use matrix::Matrix;

use chrono::NaiveDateTime;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Parses an ISO-8601 timestamp. Offsets, when present, are dropped: the
/// wall-clock reading is kept as local standard time.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .or_else(|| {
            chrono::DateTime::parse_from_rfc3339(s)
                .ok()
                .map(|d| d.naive_local())
        })
}
