//! Cleaning, summary statistics, gap filling and feature scaling for
//! measured weather and generation series.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Matrix;

/// Points further than this many standard deviations from the mean are
/// dropped as outliers.
pub const OUTLIER_SIGMA: f64 = 3.0;
/// Cleaning passes; each pass recomputes mean and spread on the survivors.
pub const OUTLIER_MAX_PASSES: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("series is empty")]
    EmptySeries,
    #[error("series has no present values to fill gaps from")]
    Unfillable,
    #[error("timestamps and values differ in length ({timestamps} vs {values})")]
    LengthMismatch { timestamps: usize, values: usize },
    #[error("series cadence is not uniform (interval ending at index {0})")]
    NonUniformCadence(usize),
    #[error("scaler needs at least one training row")]
    EmptyMatrix,
    #[error("feature '{0}' is constant in the training data")]
    ConstantFeature(String),
    #[error("expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("non-finite value at row {row}, feature {feature}")]
    NonFinite { row: usize, feature: usize },
}

/// Fully populated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<NaiveDateTime>, values: Vec<f64>) -> Result<Self, DataError> {
        if timestamps.len() != values.len() {
            return Err(DataError::LengthMismatch {
                timestamps: timestamps.len(),
                values: values.len(),
            });
        }
        Ok(Self { timestamps, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Series with explicit absent markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GappySeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<Option<f64>>,
}

impl GappySeries {
    pub fn new(timestamps: Vec<NaiveDateTime>, values: Vec<Option<f64>>) -> Result<Self, DataError> {
        if timestamps.len() != values.len() {
            return Err(DataError::LengthMismatch {
                timestamps: timestamps.len(),
                values: values.len(),
            });
        }
        Ok(Self { timestamps, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn present(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

impl From<TimeSeries> for GappySeries {
    fn from(s: TimeSeries) -> Self {
        Self {
            timestamps: s.timestamps,
            values: s.values.into_iter().map(Some).collect(),
        }
    }
}

/// Step in minutes of a uniformly spaced timestamp vector, or the index of
/// the first interval that breaks the cadence.
pub fn uniform_step_minutes(timestamps: &[NaiveDateTime]) -> Result<u32, usize> {
    if timestamps.len() < 2 {
        return Err(timestamps.len());
    }
    let step = (timestamps[1] - timestamps[0]).num_seconds();
    if step <= 0 || step % 60 != 0 {
        return Err(1);
    }
    for (i, w) in timestamps.windows(2).enumerate().skip(1) {
        if (w[1] - w[0]).num_seconds() != step {
            return Err(i + 1);
        }
    }
    Ok((step / 60) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub max: f64,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub count: usize,
}

pub fn summarize(series: &[f64]) -> Result<SeriesStats, DataError> {
    if series.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let (mean, std_dev) = mean_std(series);
    Ok(SeriesStats {
        max: sorted[n - 1],
        min: sorted[0],
        median,
        mean,
        std_dev,
        count: n,
    })
}

/// Mean and population standard deviation (two-pass).
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Marks values beyond [`OUTLIER_SIGMA`] standard deviations as missing.
/// Statistics are recomputed on the survivors for up to
/// [`OUTLIER_MAX_PASSES`] passes, stopping early once a pass removes nothing.
pub fn remove_outliers(series: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = series.to_vec();
    for _ in 0..OUTLIER_MAX_PASSES {
        if !outlier_pass(&mut out) {
            break;
        }
    }
    out
}

fn outlier_pass(values: &mut [Option<f64>]) -> bool {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.len() < 2 {
        return false;
    }
    let (mean, std) = mean_std(&present);
    let bound = OUTLIER_SIGMA * std;
    let mut removed = false;
    for v in values.iter_mut() {
        if let Some(x) = *v {
            if (x - mean).abs() > bound {
                *v = None;
                removed = true;
            }
        }
    }
    removed
}

type SlotKey = (u32, u32, u32, u32);

fn slot(t: &NaiveDateTime) -> SlotKey {
    (t.month(), t.day(), t.hour(), t.minute())
}

/// Fills gaps. A missing timestamp takes the mean of the same calendar slot
/// (month, day, hour, minute) across the other years supplied; anything still
/// missing is forward-filled, then back-filled. Present values are never
/// modified.
pub fn impute(
    series: &GappySeries,
    historical_years: &BTreeMap<i32, GappySeries>,
) -> Result<TimeSeries, DataError> {
    if series.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let mut slots: HashMap<SlotKey, (f64, usize)> = HashMap::new();
    for hist in historical_years.values() {
        for (t, v) in hist.timestamps.iter().zip(&hist.values) {
            if let Some(v) = v {
                let e = slots.entry(slot(t)).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
    }

    let mut filled: Vec<Option<f64>> = series
        .timestamps
        .iter()
        .zip(&series.values)
        .map(|(t, v)| {
            v.or_else(|| {
                slots
                    .get(&slot(t))
                    .map(|&(sum, count)| sum / count as f64)
            })
        })
        .collect();

    let mut last = None;
    for v in filled.iter_mut() {
        match v {
            Some(x) => last = Some(*x),
            None => *v = last,
        }
    }
    let mut next = None;
    for v in filled.iter_mut().rev() {
        match v {
            Some(x) => next = Some(*x),
            None => *v = next,
        }
    }

    let values = filled
        .into_iter()
        .collect::<Option<Vec<f64>>>()
        .ok_or(DataError::Unfillable)?;
    Ok(TimeSeries {
        timestamps: series.timestamps.clone(),
        values,
    })
}

/// Splits a series into one series per calendar year.
pub fn split_by_year(series: &GappySeries) -> BTreeMap<i32, GappySeries> {
    let mut out: BTreeMap<i32, GappySeries> = BTreeMap::new();
    for (t, v) in series.timestamps.iter().zip(&series.values) {
        let e = out.entry(t.year()).or_insert_with(|| GappySeries {
            timestamps: Vec::new(),
            values: Vec::new(),
        });
        e.timestamps.push(*t);
        e.values.push(*v);
    }
    out
}

/// Per-feature min-max scaler learned from training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub feature_names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(training: &Matrix) -> Result<Self, DataError> {
        let names = (0..training.cols()).map(|i| format!("feature {i}")).collect();
        Self::fit_named(training, names)
    }

    pub fn fit_named(training: &Matrix, feature_names: Vec<String>) -> Result<Self, DataError> {
        if training.is_empty() || training.cols() == 0 {
            return Err(DataError::EmptyMatrix);
        }
        if feature_names.len() != training.cols() {
            return Err(DataError::ArityMismatch {
                expected: training.cols(),
                got: feature_names.len(),
            });
        }
        let mut min = vec![f64::INFINITY; training.cols()];
        let mut max = vec![f64::NEG_INFINITY; training.cols()];
        for (r, row) in training.iter_rows().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(DataError::NonFinite { row: r, feature: c });
                }
                min[c] = min[c].min(x);
                max[c] = max[c].max(x);
            }
        }
        if let Some(c) = (0..min.len()).find(|&c| max[c] <= min[c]) {
            return Err(DataError::ConstantFeature(feature_names[c].clone()));
        }
        Ok(Self {
            feature_names,
            min,
            max,
        })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// (x − min)/(max − min); values outside the training range extrapolate.
    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>, DataError> {
        self.check(row.len())?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(c, &x)| (x - self.min[c]) / (self.max[c] - self.min[c]))
            .collect())
    }

    pub fn transform(&self, m: &Matrix) -> Result<Matrix, DataError> {
        self.check(m.cols())?;
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (c, x) in out.row_mut(r).iter_mut().enumerate() {
                *x = (*x - self.min[c]) / (self.max[c] - self.min[c]);
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, m: &Matrix) -> Result<Matrix, DataError> {
        self.check(m.cols())?;
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (c, x) in out.row_mut(r).iter_mut().enumerate() {
                *x = *x * (self.max[c] - self.min[c]) + self.min[c];
            }
        }
        Ok(out)
    }

    fn check(&self, got: usize) -> Result<(), DataError> {
        if got != self.n_features() {
            return Err(DataError::ArityMismatch {
                expected: self.n_features(),
                got,
            });
        }
        Ok(())
    }
}

/// Scalar min-max map used for regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn fit(targets: &[f64]) -> Result<Self, DataError> {
        if targets.is_empty() {
            return Err(DataError::EmptySeries);
        }
        let min = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(DataError::ConstantFeature("target".into()));
        }
        Ok(Self { min, max })
    }

    pub fn transform(&self, y: f64) -> f64 {
        (y - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::{Duration, NaiveDate};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn grid(start: NaiveDateTime, n: usize) -> Vec<NaiveDateTime> {
        (0..n).map(|i| start + Duration::minutes(15 * i as i64)).collect()
    }

    fn at(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, 0, 0)
            .unwrap()
    }

    #[test]
    fn summarize_small_series() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.max, s.min, s.median, s.mean), (5.0, 1.0, 3.0, 3.0));
        assert_abs_diff_eq!(s.std_dev, 2.0_f64.sqrt(), epsilon = 1e-15);
        assert_eq!(s.count, 5);
        assert_eq!(summarize(&[7.0; 10]).unwrap().std_dev, 0.0);
        assert_eq!(summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        assert_eq!(summarize(&[]), Err(DataError::EmptySeries));
    }

    #[test]
    fn summarize_matches_naive_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random_range(-50.0..200.0)).collect();
        let s = summarize(&xs).unwrap();
        let mut mean = 0.0;
        for x in &xs {
            mean += x;
        }
        mean /= 1000.0;
        let mut ss = 0.0;
        for x in &xs {
            ss += (x - mean) * (x - mean);
        }
        assert_abs_diff_eq!(s.mean, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(s.std_dev, (ss / 1000.0).sqrt(), epsilon = 1e-12);
        let mut sorted = xs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(s.median, 0.5 * (sorted[499] + sorted[500]));
        assert!(s.min <= s.median && s.median <= s.max);
    }

    #[test]
    fn outlier_far_out_is_removed() {
        let mut xs: Vec<Option<f64>> = (0..200).map(|i| Some(if i % 2 == 0 { 1.0 } else { -1.0 })).collect();
        xs.push(Some(25.0));
        let cleaned = remove_outliers(&xs);
        assert_eq!(cleaned[200], None);
        assert_eq!(&cleaned[..200], &xs[..200]);
    }

    #[test]
    fn inliers_untouched() {
        let xs: Vec<Option<f64>> = (0..100).map(|i| Some((i % 10) as f64)).collect();
        assert_eq!(remove_outliers(&xs), xs);
    }

    #[test]
    fn gaussian_removal_rate_near_tail_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Option<f64>> = (0..10_000)
            .map(|_| Some(StandardNormal.sample(&mut rng)))
            .collect();
        let removed = remove_outliers(&xs).iter().filter(|v| v.is_none()).count();
        let rate = removed as f64 / 10_000.0;
        // two-sided normal tail beyond 3σ
        assert!((rate - 0.0027).abs() <= 0.0015, "rate {rate}");
    }

    #[test]
    fn impute_from_other_years() {
        let gap_time = at(2019, 6, 1, 12);
        let series = GappySeries::new(
            vec![gap_time - Duration::minutes(15), gap_time, gap_time + Duration::minutes(15)],
            vec![Some(480.0), None, Some(520.0)],
        )
        .unwrap();
        let mut hist = BTreeMap::new();
        hist.insert(2018, GappySeries::new(vec![at(2018, 6, 1, 12)], vec![Some(500.0)]).unwrap());
        hist.insert(2020, GappySeries::new(vec![at(2020, 6, 1, 12)], vec![Some(700.0)]).unwrap());
        let filled = impute(&series, &hist).unwrap();
        assert_eq!(filled.values, vec![480.0, 600.0, 520.0]);
    }

    #[test]
    fn impute_fill_directions() {
        let ts = grid(at(2019, 1, 1, 0), 5);
        let s = GappySeries::new(ts.clone(), vec![None, None, Some(3.0), None, Some(5.0)]).unwrap();
        let filled = impute(&s, &BTreeMap::new()).unwrap();
        assert_eq!(filled.values, vec![3.0, 3.0, 3.0, 3.0, 5.0]);

        let empty = GappySeries::new(ts, vec![None; 5]).unwrap();
        assert_eq!(impute(&empty, &BTreeMap::new()), Err(DataError::Unfillable));
    }

    #[test]
    fn impute_random_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts = grid(at(2019, 3, 1, 0), 2000);
        let truth: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.1).sin() * 100.0).collect();
        let gappy: Vec<Option<f64>> = truth
            .iter()
            .map(|&v| if rng.random_bool(0.1) { None } else { Some(v) })
            .collect();
        let s = GappySeries::new(ts, gappy.clone()).unwrap();
        let filled = impute(&s, &split_by_year(&s)).unwrap();
        assert_eq!(filled.len(), 2000);
        for (orig, got) in gappy.iter().zip(&filled.values) {
            if let Some(v) = orig {
                assert_eq!(v, got);
            }
        }
    }

    #[test]
    fn cadence_detection() {
        let mut ts = grid(at(2019, 1, 1, 0), 6);
        assert_eq!(uniform_step_minutes(&ts), Ok(15));
        ts[4] += Duration::minutes(1);
        assert_eq!(uniform_step_minutes(&ts), Err(4));
    }

    #[test]
    fn scaler_examples() {
        let train = Matrix::from_rows(&(0..=10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let sc = MinMaxScaler::fit(&train).unwrap();
        assert_eq!(sc.transform_row(&[5.0]).unwrap(), vec![0.5]);
        assert!(sc.transform_row(&[12.0]).unwrap()[0] > 1.0);
        assert!(matches!(
            sc.transform_row(&[1.0, 2.0]),
            Err(DataError::ArityMismatch { .. })
        ));

        let constant = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0]]).unwrap();
        match MinMaxScaler::fit_named(&constant, vec!["r0".into(), "cloud".into()]) {
            Err(DataError::ConstantFeature(name)) => assert_eq!(name, "cloud"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn scaler_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let m = Matrix::from_rows(&rows).unwrap();
            prop_assume!(MinMaxScaler::fit(&m).is_ok());
            let sc = MinMaxScaler::fit(&m).unwrap();
            let t = sc.transform(&m).unwrap();
            prop_assert!(t.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
            let back = sc.inverse_transform(&t).unwrap();
            for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn impute_never_touches_present(values in prop::collection::vec(prop::option::weighted(0.7, -100.0f64..100.0), 1..200)) {
            prop_assume!(values.iter().any(|v| v.is_some()));
            let ts = grid(at(2020, 2, 1, 0), values.len());
            let s = GappySeries::new(ts, values.clone()).unwrap();
            let filled = impute(&s, &BTreeMap::new()).unwrap();
            for (o, f) in values.iter().zip(&filled.values) {
                if let Some(v) = o {
                    prop_assert_eq!(v, f);
                }
            }
        }

        #[test]
        fn outlier_removal_reaches_fixpoint(values in prop::collection::vec(-10.0f64..10.0, 5..100), spike in 50.0f64..500.0) {
            let mut xs: Vec<Option<f64>> = values.into_iter().map(Some).collect();
            xs.push(Some(spike));
            let once = remove_outliers(&xs);
            let present: Vec<f64> = once.iter().flatten().copied().collect();
            let (m, s) = mean_std(&present);
            if present.iter().all(|x| (x - m).abs() <= OUTLIER_SIGMA * s) {
                prop_assert_eq!(remove_outliers(&once), once);
            }
        }
    }
}
