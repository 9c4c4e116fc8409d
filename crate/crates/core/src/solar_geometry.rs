//! Solar position and ideal clear-sky global horizontal irradiance.
//!
//! Angles are degrees on the whole public surface; radians only appear
//! inside the trig calls. Hour angle is positive before solar noon and the
//! azimuth is measured from due south, positive towards the east (morning).
//!
//! Clock times are local *standard* time for the site. The mapping from clock
//! time to "hours before solar noon" applies the longitude correction of
//! 4 minutes per degree from the time-zone meridian plus, optionally, an
//! equation-of-time term.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest latitude accepted by [`SiteLocation`]. Above the polar circle the
/// sun may not rise or set for days, which the daily clear-sky model does not
/// represent.
pub const MAX_LATITUDE_DEG: f64 = 66.56;

/// Amplitude of the declination sinusoid.
pub const OBLIQUITY_DEG: f64 = 23.45;

/// Quintic clear-sky coefficients, highest degree first (β̄ in degrees).
pub const GHI_COEFFICIENTS: [f64; 6] = [-4.72e-7, 1.15e-4, -1.15e-2, 4.78e-1, 8.31, -0.079];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid calendar date {year:04}-{month:02}-{day:02}")]
    InvalidDate { year: i32, month: u32, day: u32 },
    #[error("fractional day {0} outside [0, 1)")]
    InvalidDayFraction(f64),
    #[error("day of year {0} outside 1..=366")]
    DayOfYearOutOfRange(u32),
    #[error("latitude {0}° rejected: the model covers northern-hemisphere sites in (0, {MAX_LATITUDE_DEG}]")]
    UnsupportedLatitude(f64),
    #[error("longitude {0}° outside [-180, 180]")]
    InvalidLongitude(f64),
    #[error("utc offset {0} h outside [-12, 14]")]
    InvalidUtcOffset(f64),
    #[error("azimuth undefined for a sun at the zenith (altitude {0}°)")]
    ZenithSun(f64),
    #[error("clear-sky range invalid: {0}")]
    InvalidRange(String),
}

/// Observer location. Only northern-hemisphere sites below the polar circle
/// can be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSite", into = "RawSite")]
pub struct SiteLocation {
    latitude_deg: f64,
    longitude_deg: f64,
    elevation_ft: f64,
    utc_offset_hours: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSite {
    latitude_deg: f64,
    longitude_deg: f64,
    #[serde(default)]
    elevation_ft: f64,
    utc_offset_hours: f64,
}

impl TryFrom<RawSite> for SiteLocation {
    type Error = GeometryError;

    fn try_from(raw: RawSite) -> Result<Self, Self::Error> {
        SiteLocation::new(
            raw.latitude_deg,
            raw.longitude_deg,
            raw.elevation_ft,
            raw.utc_offset_hours,
        )
    }
}

impl From<SiteLocation> for RawSite {
    fn from(site: SiteLocation) -> Self {
        RawSite {
            latitude_deg: site.latitude_deg,
            longitude_deg: site.longitude_deg,
            elevation_ft: site.elevation_ft,
            utc_offset_hours: site.utc_offset_hours,
        }
    }
}

impl SiteLocation {
    pub fn new(
        latitude_deg: f64,
        longitude_deg: f64,
        elevation_ft: f64,
        utc_offset_hours: f64,
    ) -> Result<Self, GeometryError> {
        if !(latitude_deg > 0.0 && latitude_deg <= MAX_LATITUDE_DEG) {
            return Err(GeometryError::UnsupportedLatitude(latitude_deg));
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(GeometryError::InvalidLongitude(longitude_deg));
        }
        if !(-12.0..=14.0).contains(&utc_offset_hours) {
            return Err(GeometryError::InvalidUtcOffset(utc_offset_hours));
        }
        Ok(Self {
            latitude_deg,
            longitude_deg,
            elevation_ft,
            utc_offset_hours,
        })
    }

    /// The Miami canopy: 25.76°N, 80.36°W, 10 ft, Eastern Standard Time.
    pub fn miami() -> Self {
        Self::new(25.76, -80.36, 10.0, -5.0).expect("static site is valid")
    }

    pub fn latitude_deg(&self) -> f64 {
        self.latitude_deg
    }

    pub fn longitude_deg(&self) -> f64 {
        self.longitude_deg
    }

    pub fn elevation_ft(&self) -> f64 {
        self.elevation_ft
    }

    pub fn utc_offset_hours(&self) -> f64 {
        self.utc_offset_hours
    }

    /// Longitude of the time-zone meridian, degrees east.
    pub fn standard_meridian_deg(&self) -> f64 {
        15.0 * self.utc_offset_hours
    }
}

/// Options for mapping clock time onto solar time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarTimeOptions {
    /// Include the equation-of-time correction. Disable for the bare
    /// longitude-only mapping.
    pub use_equation_of_time: bool,
}

impl Default for SolarTimeOptions {
    fn default() -> Self {
        Self {
            use_equation_of_time: true,
        }
    }
}

/// Sun position for one instant at one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarPosition {
    pub julian_date: f64,
    pub day_of_year: u32,
    pub declination_deg: f64,
    pub hour_angle_deg: f64,
    pub altitude_deg: f64,
    pub azimuth_deg: f64,
}

impl SolarPosition {
    pub fn at(
        site: &SiteLocation,
        time: NaiveDateTime,
        options: SolarTimeOptions,
    ) -> Result<Self, GeometryError> {
        let date = time.date();
        let julian_date = julian_date(
            date.year(),
            date.month(),
            date.day(),
            day_fraction(time),
        )?;
        let day_of_year = date.ordinal();
        let declination_deg = declination(day_of_year)?;
        let hour_angle_deg = hour_angle(hours_before_solar_noon(site, time, options));
        let altitude_deg = altitude(site.latitude_deg, declination_deg, hour_angle_deg);
        let azimuth_deg = azimuth(
            site.latitude_deg,
            declination_deg,
            hour_angle_deg,
            altitude_deg,
        )?;
        Ok(Self {
            julian_date,
            day_of_year,
            declination_deg,
            hour_angle_deg,
            altitude_deg,
            azimuth_deg,
        })
    }
}

fn day_fraction(time: NaiveDateTime) -> f64 {
    (f64::from(time.num_seconds_from_midnight()) + f64::from(time.nanosecond()) * 1e-9) / 86_400.0
}

/// Julian date of a Gregorian calendar date plus a fraction of a day.
///
/// January and February are counted as months 13 and 14 of the previous
/// year before the floor terms are evaluated.
pub fn julian_date(
    year: i32,
    month: u32,
    day: u32,
    fractional_day: f64,
) -> Result<f64, GeometryError> {
    if NaiveDate::from_ymd_opt(year, month, day).is_none() {
        return Err(GeometryError::InvalidDate { year, month, day });
    }
    if !(0.0..1.0).contains(&fractional_day) {
        return Err(GeometryError::InvalidDayFraction(fractional_day));
    }
    let (y, m) = if month <= 2 {
        (f64::from(year - 1), f64::from(month + 12))
    } else {
        (f64::from(year), f64::from(month))
    };
    let b = 2.0 - (y / 100.0).floor() + (y / 400.0).floor();
    Ok((365.25 * (y + 4716.0)).floor() + (30.6001 * (m + 1.0)).floor() + f64::from(day) + b
        - 1524.5
        + fractional_day)
}

/// Solar declination for day-of-year `n` (1 = January 1st).
pub fn declination(day_of_year: u32) -> Result<f64, GeometryError> {
    if !(1..=366).contains(&day_of_year) {
        return Err(GeometryError::DayOfYearOutOfRange(day_of_year));
    }
    Ok(declination_unchecked(f64::from(day_of_year)))
}

pub(crate) fn declination_unchecked(day_of_year: f64) -> f64 {
    OBLIQUITY_DEG * (360.0 / 365.0 * (day_of_year - 81.0)).to_radians().sin()
}

/// 15° per hour, positive before solar noon.
pub fn hour_angle(hours_before_solar_noon: f64) -> f64 {
    15.0 * hours_before_solar_noon
}

pub fn altitude(latitude_deg: f64, declination_deg: f64, hour_angle_deg: f64) -> f64 {
    let (l, d, h) = (
        latitude_deg.to_radians(),
        declination_deg.to_radians(),
        hour_angle_deg.to_radians(),
    );
    let s = l.cos() * d.cos() * h.cos() + l.sin() * d.sin();
    s.clamp(-1.0, 1.0).asin().to_degrees()
}

/// Azimuth from due south. The arcsine branch is resolved with the
/// `cos H >= tan δ / tan L` test: when it fails the sun is more than 90°
/// away from south.
pub fn azimuth(
    latitude_deg: f64,
    declination_deg: f64,
    hour_angle_deg: f64,
    altitude_deg: f64,
) -> Result<f64, GeometryError> {
    let cos_alt = altitude_deg.to_radians().cos();
    if altitude_deg.abs() >= 90.0 || cos_alt.abs() < 1e-12 {
        return Err(GeometryError::ZenithSun(altitude_deg));
    }
    let (l, d, h) = (
        latitude_deg.to_radians(),
        declination_deg.to_radians(),
        hour_angle_deg.to_radians(),
    );
    let principal = (d.cos() * h.sin() / cos_alt)
        .clamp(-1.0, 1.0)
        .asin()
        .to_degrees();
    if h.cos() >= d.tan() / l.tan() {
        Ok(principal)
    } else if hour_angle_deg < 0.0 {
        Ok(-180.0 - principal)
    } else {
        Ok(180.0 - principal)
    }
}

/// Evaluates the clear-sky quintic on the mean of two consecutive altitudes.
/// Night (β̄ ≤ 0) and negative polynomial values are floored at zero.
pub fn clear_sky_ghi(altitude_now_deg: f64, altitude_next_deg: f64) -> f64 {
    let mean = 0.5 * (altitude_now_deg + altitude_next_deg);
    if mean <= 0.0 {
        return 0.0;
    }
    ghi_polynomial(mean).max(0.0)
}

/// The raw quintic, no clamping.
pub fn ghi_polynomial(mean_altitude_deg: f64) -> f64 {
    GHI_COEFFICIENTS
        .iter()
        .fold(0.0, |acc, c| acc * mean_altitude_deg + c)
}

/// Equation of time in minutes (solar minus mean time).
pub fn equation_of_time_minutes(day_of_year: f64) -> f64 {
    let b = (360.0 / 364.0 * (day_of_year - 81.0)).to_radians();
    9.87 * (2.0 * b).sin() - 7.53 * b.cos() - 1.5 * b.sin()
}

/// Solar time in hours after local solar midnight for a standard-time clock.
pub fn solar_time_hours(site: &SiteLocation, time: NaiveDateTime, options: SolarTimeOptions) -> f64 {
    let clock_hours = day_fraction(time) * 24.0;
    let mut correction_min = 4.0 * (site.longitude_deg - site.standard_meridian_deg());
    if options.use_equation_of_time {
        correction_min += equation_of_time_minutes(f64::from(time.ordinal()));
    }
    clock_hours + correction_min / 60.0
}

pub fn hours_before_solar_noon(
    site: &SiteLocation,
    time: NaiveDateTime,
    options: SolarTimeOptions,
) -> f64 {
    12.0 - solar_time_hours(site, time, options)
}

/// Clock time (local standard) of solar noon on `date`.
pub fn solar_noon(site: &SiteLocation, date: NaiveDate, options: SolarTimeOptions) -> NaiveDateTime {
    let midnight = date.and_hms_opt(0, 0, 0).expect("midnight exists");
    let noon = date.and_hms_opt(12, 0, 0).expect("noon exists");
    let offset_hours = solar_time_hours(site, midnight, options);
    noon - Duration::milliseconds((offset_hours * 3_600_000.0).round() as i64)
}

/// Altitude of the sun at a clock time.
pub fn altitude_at(site: &SiteLocation, time: NaiveDateTime, options: SolarTimeOptions) -> f64 {
    let n = time.ordinal();
    let declination_deg = declination_unchecked(f64::from(n));
    altitude(
        site.latitude_deg,
        declination_deg,
        hour_angle(hours_before_solar_noon(site, time, options)),
    )
}

/// Ideal irradiance sampled on a uniform grid `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearSkyCurve {
    pub timestamps: Vec<NaiveDateTime>,
    pub ghi_wm2: Vec<f64>,
    pub step_minutes: u32,
}

impl ClearSkyCurve {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDateTime, f64)> + '_ {
        self.timestamps.iter().copied().zip(self.ghi_wm2.iter().copied())
    }

    /// Writes `timestamp_iso8601,ideal_irradiance_wm2` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp_iso8601", "ideal_irradiance_wm2"])?;
        for (t, v) in self.iter() {
            w.write_record([crate::format_timestamp(t), format!("{v:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Clear-sky GHI at one step: altitude at `time` and at `time + step`.
pub fn clear_sky_at(
    site: &SiteLocation,
    time: NaiveDateTime,
    step_minutes: u32,
    options: SolarTimeOptions,
) -> f64 {
    let next = time + Duration::minutes(i64::from(step_minutes));
    clear_sky_ghi(
        altitude_at(site, time, options),
        altitude_at(site, next, options),
    )
}

pub fn clear_sky_curve(
    site: &SiteLocation,
    start: NaiveDateTime,
    end: NaiveDateTime,
    step_minutes: u32,
    options: SolarTimeOptions,
) -> Result<ClearSkyCurve, GeometryError> {
    if step_minutes == 0 {
        return Err(GeometryError::InvalidRange("step must be positive".into()));
    }
    if start >= end {
        return Err(GeometryError::InvalidRange(format!(
            "start {start} is not before end {end}"
        )));
    }
    let span = (end - start).num_seconds();
    let step_secs = i64::from(step_minutes) * 60;
    if span % step_secs != 0 {
        return Err(GeometryError::InvalidRange(format!(
            "{step_minutes}-minute step does not divide the {span}-second range"
        )));
    }
    let count = (span / step_secs) as usize;
    let step = Duration::minutes(i64::from(step_minutes));
    let timestamps: Vec<NaiveDateTime> = (0..count).map(|i| start + step * i as i32).collect();
    // consecutive samples share an altitude evaluation
    let altitudes: Vec<f64> = (0..=count)
        .map(|i| altitude_at(site, start + step * i as i32, options))
        .collect();
    let ghi_wm2 = altitudes
        .windows(2)
        .map(|w| clear_sky_ghi(w[0], w[1]))
        .collect();
    Ok(ClearSkyCurve {
        timestamps,
        ghi_wm2,
        step_minutes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").unwrap()
    }

    /// Counts days from 2000-01-01 (JD 2451544.5) one at a time.
    fn jd_by_day_counting(year: i32, month: u32, day: u32) -> f64 {
        fn leap(y: i32) -> bool {
            (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
        }
        fn month_len(y: i32, m: u32) -> i64 {
            match m {
                1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
                4 | 6 | 9 | 11 => 30,
                _ if leap(y) => 29,
                _ => 28,
            }
        }
        let mut days: i64 = 0;
        if year >= 2000 {
            for y in 2000..year {
                days += if leap(y) { 366 } else { 365 };
            }
        } else {
            for y in year..2000 {
                days -= if leap(y) { 366 } else { 365 };
            }
        }
        for m in 1..month {
            days += month_len(year, m);
        }
        days += i64::from(day) - 1;
        2_451_544.5 + days as f64
    }

    #[test]
    fn julian_date_reference_points() {
        assert_eq!(julian_date(2000, 1, 1, 0.0).unwrap(), 2_451_544.5);
        assert_eq!(julian_date(2000, 1, 1, 0.5).unwrap(), 2_451_545.0);
        assert_eq!(
            julian_date(2017, 9, 10, 0.0).unwrap(),
            jd_by_day_counting(2017, 9, 10)
        );
        assert_eq!(julian_date(2017, 9, 10, 0.0).unwrap(), 2_458_006.5);
    }

    #[test]
    fn julian_date_rejects_bad_dates() {
        assert!(matches!(
            julian_date(2019, 2, 29, 0.0),
            Err(GeometryError::InvalidDate { .. })
        ));
        assert!(julian_date(2019, 13, 1, 0.0).is_err());
        assert!(julian_date(2019, 1, 1, 1.0).is_err());
    }

    #[test]
    fn julian_date_scan_1900_2100() {
        let mut date = NaiveDate::from_ymd_opt(1900, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2100, 12, 31).unwrap();
        let mut prev = julian_date(1900, 1, 1, 0.0).unwrap() - 1.0;
        while date <= end {
            let jd = julian_date(date.year(), date.month(), date.day(), 0.0).unwrap();
            assert_eq!(jd - prev, 1.0, "step at {date}");
            if date.day() == 1 {
                assert_eq!(jd, jd_by_day_counting(date.year(), date.month(), 1));
            }
            prev = jd;
            date = date.succ_opt().unwrap();
        }
    }

    #[test]
    fn declination_examples() {
        assert_abs_diff_eq!(declination(81).unwrap(), 0.0, epsilon = 1e-12);
        let summer = 23.45 * (360.0_f64 / 365.0 * 91.0).to_radians().sin();
        assert_abs_diff_eq!(declination(172).unwrap(), summer, epsilon = 1e-12);
        assert_abs_diff_eq!(declination(172).unwrap(), 23.449, epsilon = 1e-3);
        assert_abs_diff_eq!(declination(1).unwrap(), -23.01, epsilon = 0.01);
        assert!(declination(0).is_err());
        assert!(declination(367).is_err());
        assert!(declination(366).is_ok());
    }

    #[test]
    fn hour_angle_examples() {
        assert_eq!(hour_angle(0.0), 0.0);
        assert_eq!(hour_angle(3.0), 45.0);
        assert_eq!(hour_angle(-2.0), -30.0);
    }

    #[test]
    fn altitude_examples() {
        assert_abs_diff_eq!(altitude(25.76, 0.0, 0.0), 64.24, epsilon = 1e-9);
        assert_abs_diff_eq!(altitude(25.76, 0.0, 90.0), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(altitude(25.76, 23.45, 0.0), 87.69, epsilon = 1e-9);
    }

    #[test]
    fn azimuth_examples() {
        assert_eq!(azimuth(25.76, 10.0, 0.0, altitude(25.76, 10.0, 0.0)).unwrap(), 0.0);

        let beta = altitude(25.76, 0.0, 45.0);
        let expected = (45.0_f64.to_radians().sin() / beta.to_radians().cos())
            .asin()
            .to_degrees();
        assert_abs_diff_eq!(
            azimuth(25.76, 0.0, 45.0, beta).unwrap(),
            expected,
            epsilon = 1e-12
        );

        // early summer morning: cos H < tan δ / tan L
        let (l, d, h): (f64, f64, f64) = (25.76, 23.45, 90.0);
        assert!(h.to_radians().cos() < d.to_radians().tan() / l.to_radians().tan());
        let az = azimuth(l, d, h, altitude(l, d, h)).unwrap();
        assert!(az.abs() > 90.0, "{az}");
        let az_pm = azimuth(l, d, -h, altitude(l, d, -h)).unwrap();
        assert!(az_pm.abs() > 90.0 && az_pm < 0.0);
    }

    #[test]
    fn azimuth_rejects_zenith() {
        assert!(matches!(
            azimuth(23.45, 23.45, 0.0, 90.0),
            Err(GeometryError::ZenithSun(_))
        ));
    }

    #[test]
    fn ghi_examples() {
        assert_eq!(clear_sky_ghi(-5.0, 5.0), 0.0);
        assert_eq!(clear_sky_ghi(-10.0, -2.0), 0.0);
        assert_abs_diff_eq!(ghi_polynomial(0.0), -0.079, epsilon = 1e-15);
        let b: f64 = 45.0;
        let direct = -4.72e-7 * b.powi(5) + 1.15e-4 * b.powi(4) - 1.15e-2 * b.powi(3)
            + 4.78e-1 * b.powi(2)
            + 8.31 * b
            - 0.079;
        assert_abs_diff_eq!(clear_sky_ghi(40.0, 50.0), direct, epsilon = 1e-9);
        assert!(clear_sky_ghi(90.0, 90.0) > clear_sky_ghi(45.0, 45.0));
    }

    #[test]
    fn ghi_nonnegative_and_rising_until_its_peak() {
        // The quintic turns over at about 84.47°, so monotonicity holds below it only.
        let mut prev = 0.0;
        let mut peak_at = 0.0;
        let mut peak = 0.0;
        for i in 0..=90_000 {
            let b = f64::from(i) * 1e-3;
            let g = clear_sky_ghi(b, b);
            assert!(g >= 0.0);
            if g > peak {
                peak = g;
                peak_at = b;
            }
            if b <= 84.4 {
                assert!(g >= prev, "decrease at {b}");
            }
            prev = g;
        }
        assert!((84.0..85.0).contains(&peak_at), "{peak_at}");
    }

    #[test]
    fn site_guards() {
        assert!(SiteLocation::new(-10.0, 0.0, 0.0, 0.0).is_err());
        assert!(SiteLocation::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(SiteLocation::new(80.0, 0.0, 0.0, 0.0).is_err());
        assert!(SiteLocation::new(90.0, 0.0, 0.0, 0.0).is_err());
        assert!(SiteLocation::new(25.0, 190.0, 0.0, 0.0).is_err());
        assert!(SiteLocation::new(25.0, -80.0, 0.0, -5.0).is_ok());
    }

    #[test]
    fn site_deserialization_validates() {
        let ok: SiteLocation = serde_json::from_str(
            r#"{"latitude_deg":25.76,"longitude_deg":-80.36,"elevation_ft":10,"utc_offset_hours":-5}"#,
        )
        .unwrap();
        assert_eq!(ok, SiteLocation::miami());
        let bad = serde_json::from_str::<SiteLocation>(
            r#"{"latitude_deg":-25.0,"longitude_deg":-80.36,"utc_offset_hours":-5}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn clear_sky_curve_shape_and_count() {
        let site = SiteLocation::miami();
        let curve = clear_sky_curve(
            &site,
            ts("2019-06-21T00:00:00"),
            ts("2019-06-22T00:00:00"),
            15,
            SolarTimeOptions::default(),
        )
        .unwrap();
        assert_eq!(curve.len(), 96);
        assert_eq!(curve.ghi_wm2[0], 0.0);
        assert_eq!(*curve.ghi_wm2.last().unwrap(), 0.0);
        assert!(curve.ghi_wm2.iter().all(|&g| g >= 0.0));
        let max = curve.ghi_wm2.iter().cloned().fold(0.0, f64::max);
        assert!(max > 950.0, "{max}");
        for w in curve.timestamps.windows(2) {
            assert_eq!((w[1] - w[0]).num_minutes(), 15);
        }
    }

    #[test]
    fn clear_sky_curve_rejects_bad_ranges() {
        let site = SiteLocation::miami();
        let opts = SolarTimeOptions::default();
        let a = ts("2019-06-21T00:00:00");
        let b = ts("2019-06-21T01:10:00");
        assert!(clear_sky_curve(&site, b, a, 15, opts).is_err());
        assert!(clear_sky_curve(&site, a, b, 15, opts).is_err());
        assert!(clear_sky_curve(&site, a, b, 0, opts).is_err());
    }

    #[test]
    fn solar_noon_maximises_altitude() {
        let site = SiteLocation::miami();
        let opts = SolarTimeOptions::default();
        let date = NaiveDate::from_ymd_opt(2019, 3, 10).unwrap();
        let noon = solar_noon(&site, date, opts);
        assert_abs_diff_eq!(hours_before_solar_noon(&site, noon, opts), 0.0, epsilon = 1e-6);
        let at_noon = altitude_at(&site, noon, opts);
        for m in [-30, -5, 5, 30] {
            assert!(altitude_at(&site, noon + Duration::minutes(m), opts) < at_noon);
        }
        // Miami sits west of the -75° meridian, so noon comes after 12:00
        assert!(noon.time() > chrono::NaiveTime::from_hms_opt(12, 0, 0).unwrap());
    }

    #[test]
    fn equation_of_time_switch() {
        let site = SiteLocation::miami();
        let t = ts("2019-11-03T12:00:00");
        let with = solar_time_hours(&site, t, SolarTimeOptions::default());
        let without = solar_time_hours(
            &site,
            t,
            SolarTimeOptions {
                use_equation_of_time: false,
            },
        );
        assert_abs_diff_eq!(without, 12.0 + 4.0 * (-80.36 + 75.0) / 60.0, epsilon = 1e-12);
        // early November the sun runs about 16 minutes fast
        assert!((with - without) * 60.0 > 15.0);
    }

    #[test]
    fn solar_position_bundle() {
        let site = SiteLocation::miami();
        let p = SolarPosition::at(&site, ts("2000-01-01T12:00:00"), SolarTimeOptions::default())
            .unwrap();
        assert_eq!(p.julian_date, 2_451_545.0);
        assert_eq!(p.day_of_year, 1);
        assert!(p.altitude_deg > 30.0 && p.altitude_deg < 45.0);
        assert!(p.azimuth_deg.abs() < 20.0);
    }

    proptest! {
        #[test]
        fn declination_is_bounded_and_periodic(n in 1.0f64..=366.0) {
            let d = declination_unchecked(n);
            prop_assert!(d.abs() <= OBLIQUITY_DEG + 1e-12);
            prop_assert!((d - declination_unchecked(n + 365.0)).abs() < 1e-9);
        }

        #[test]
        fn altitude_peaks_at_noon(l in 1.0f64..66.0, d in -23.45f64..23.45, h in -180.0f64..180.0) {
            prop_assert!(altitude(l, d, h) <= altitude(l, d, 0.0) + 1e-12);
            let a = altitude(l, d, h);
            prop_assert!((-90.0..=90.0).contains(&a));
        }

        #[test]
        fn azimuth_is_east_west_symmetric(l in 1.0f64..66.0, d in -23.45f64..23.45, h in 0.5f64..179.0) {
            let b = altitude(l, d, h);
            prop_assume!(b.abs() < 89.0);
            let east = azimuth(l, d, h, b).unwrap();
            let west = azimuth(l, d, -h, altitude(l, d, -h)).unwrap();
            prop_assert!((east + west).abs() < 1e-9, "{} {}", east, west);
        }
    }
}
