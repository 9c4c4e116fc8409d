//! Reproducible stand-in for a measured site: clear-sky irradiance
//! attenuated by a stochastic cloud field, with matching temperatures,
//! production and a noisy hourly NWP feed.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{RawDataset, STEP_MINUTES};
use super::io::{write_nwp_csv, write_production_csv, write_weather_csv};
use super::{io_err, NwpRecord, PipelineError, ProductionRow, WeatherRow};
use crate::pv_estimation::{estimate_kw_ac, PlantConfig};
use crate::solar_geometry::{clear_sky_curve, SiteLocation, SolarTimeOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub site: SiteLocation,
    pub plant: PlantConfig,
    pub start: NaiveDateTime,
    pub days: u32,
    pub seed: u64,
    /// Lag-one autocorrelation of the latent cloud process per 15-min step.
    pub cloud_persistence: f64,
    /// Relative standard deviation of multiplicative irradiance noise.
    pub irradiance_noise: f64,
    pub nwp_cloud_noise_pct: f64,
    pub nwp_temp_noise_f: f64,
    /// Days of NWP issued beyond the last measurement.
    pub nwp_lead_days: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            site: SiteLocation::miami(),
            plant: PlantConfig::default(),
            start: chrono::NaiveDate::from_ymd_opt(2021, 1, 1)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
            days: 730,
            seed: 7,
            cloud_persistence: 0.97,
            irradiance_noise: 0.03,
            nwp_cloud_noise_pct: 5.0,
            nwp_temp_noise_f: 1.5,
            nwp_lead_days: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub weather: Vec<WeatherRow>,
    pub nwp: Vec<NwpRecord>,
    pub production: Vec<ProductionRow>,
}

/// Kasten-Czeplak style attenuation of clear-sky irradiance by cloud cover.
pub(crate) fn cloud_attenuation(cloud_pct: f64) -> f64 {
    1.0 - 0.75 * (cloud_pct / 100.0).powf(3.4)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Seasonal and diurnal ambient temperature, cooled slightly by cloud.
fn mean_ambient_f(t: NaiveDateTime, cloud_pct: f64) -> f64 {
    let hour = f64::from(t.hour()) + f64::from(t.minute()) / 60.0;
    let doy = f64::from(t.ordinal());
    76.0 + 8.0 * (2.0 * PI * (doy - 110.0) / 365.0).sin() + 6.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin()
        - 3.0 * cloud_pct / 100.0
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData, PipelineError> {
    if cfg.days == 0 {
        return Err(PipelineError::Config("synthetic days must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.cloud_persistence) {
        return Err(PipelineError::Config("cloud_persistence must be in [0, 1)".into()));
    }
    let noise_ok = [cfg.irradiance_noise, cfg.nwp_cloud_noise_pct, cfg.nwp_temp_noise_f]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0);
    if !noise_ok {
        return Err(PipelineError::Config("noise levels must be finite and non-negative".into()));
    }
    cfg.plant.validate()?;

    let end = cfg.start + Duration::days(i64::from(cfg.days));
    let opts = SolarTimeOptions::default();
    let clear = clear_sky_curve(&cfg.site, cfg.start, end, STEP_MINUTES, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut gauss = |sd: f64| sd * std_normal.sample(&mut rng);

    let phi = cfg.cloud_persistence;
    let innovation = (1.0 - phi * phi).sqrt();
    let mut latent = 0.0;
    let mut weather = Vec::with_capacity(clear.len());
    let mut production = Vec::with_capacity(clear.len());
    for (t, r0) in clear.iter() {
        latent = phi * latent + innovation * gauss(1.0);
        let cloud = 100.0 * sigmoid(1.8 * latent - 0.4);
        let irr = (r0 * cloud_attenuation(cloud) * (1.0 + gauss(cfg.irradiance_noise))).max(0.0);
        let ambient = mean_ambient_f(t, cloud) + gauss(0.8);
        let module = ambient + 0.035 * irr + gauss(0.8);
        let kw = estimate_kw_ac(&cfg.plant, irr, (module - 32.0) * 5.0 / 9.0)?;
        weather.push(WeatherRow {
            timestamp: t,
            irradiance_wm2: Some(irr),
            ambient_temp_f: Some(ambient),
            module_temp_f: Some(module),
            cloud_cover_pct: Some(cloud),
        });
        production.push(ProductionRow {
            timestamp: t,
            generation_kw: Some(kw),
        });
    }

    // The NWP feed perturbs the hourly truth and, past the measured
    // record, continues the cloud process on its own.
    let nwp_hours = 24 * i64::from(cfg.days + cfg.nwp_lead_days) + 1;
    let per_hour = (60 / STEP_MINUTES) as usize;
    let mut nwp = Vec::with_capacity(nwp_hours as usize);
    for h in 0..nwp_hours {
        let t = cfg.start + Duration::hours(h);
        let (cloud, ambient) = match weather.get(h as usize * per_hour) {
            Some(w) => (
                w.cloud_cover_pct.expect("generated"),
                w.ambient_temp_f.expect("generated"),
            ),
            None => {
                latent = phi.powi(per_hour as i32) * latent + gauss(1.0) * (1.0 - phi.powi(2 * per_hour as i32)).sqrt();
                let cloud = 100.0 * sigmoid(1.8 * latent - 0.4);
                (cloud, mean_ambient_f(t, cloud))
            }
        };
        nwp.push(NwpRecord {
            timestamp: t,
            ambient_temp_forecast_f: ambient + gauss(cfg.nwp_temp_noise_f),
            cloud_cover_forecast_pct: (cloud + gauss(cfg.nwp_cloud_noise_pct)).clamp(0.0, 100.0),
        });
    }

    Ok(SyntheticData {
        weather,
        nwp,
        production,
    })
}

impl SyntheticData {
    pub fn to_raw(&self) -> RawDataset {
        RawDataset {
            weather: self.weather.clone(),
            nwp: self.nwp.clone(),
            production: self.production.clone(),
        }
    }

    /// Writes `weather.csv`, `nwp.csv` and `production.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 3], PipelineError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let paths = [
            dir.join("weather.csv"),
            dir.join("nwp.csv"),
            dir.join("production.csv"),
        ];
        write_weather_csv(&paths[0], &self.weather)?;
        write_nwp_csv(&paths[1], &self.nwp)?;
        write_production_csv(&paths[2], &self.production)?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> SyntheticConfig {
        SyntheticConfig {
            days: 10,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn shapes_and_ranges() {
        let d = generate(&short()).unwrap();
        assert_eq!(d.weather.len(), 960);
        assert_eq!(d.production.len(), 960);
        assert_eq!(d.nwp.len(), 241);
        for w in &d.weather {
            let c = w.cloud_cover_pct.unwrap();
            assert!((0.0..=100.0).contains(&c));
            assert!(w.irradiance_wm2.unwrap() >= 0.0);
        }
        assert!(d.nwp.iter().all(|n| (0.0..=100.0).contains(&n.cloud_cover_forecast_pct)));
    }

    #[test]
    fn night_is_dark_and_seeded() {
        let d = generate(&short()).unwrap();
        assert_eq!(d.weather[0].irradiance_wm2, Some(0.0));
        assert_eq!(d, generate(&short()).unwrap());
        let other = generate(&SyntheticConfig { seed: 8, ..short() }).unwrap();
        assert_ne!(d.weather, other.weather);
    }

    #[test]
    fn lead_days_extend_nwp_only() {
        let d = generate(&SyntheticConfig {
            nwp_lead_days: 3,
            ..short()
        })
        .unwrap();
        assert_eq!(d.weather.len(), 960);
        assert_eq!(d.nwp.len(), 13 * 24 + 1);
    }

    #[test]
    fn attenuation_endpoints() {
        assert_eq!(cloud_attenuation(0.0), 1.0);
        assert!((cloud_attenuation(100.0) - 0.25).abs() < 1e-12);
    }
}
