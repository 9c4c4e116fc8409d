use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::dataset::WeatherSample;
use super::guard::HistoryGuard;
use super::io::write_atomic;
use super::{io_err, Config, Dataset, PipelineError};
use crate::analysis::{sobol_first_order, SobolReport};
use crate::data_prep::MinMaxScaler;
use crate::regressors::{
    AnnModel, CartTree, EnsembleModel, ModelError, ModuleTempModel, Regressor, SvrModel,
};
use crate::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Raw feature order shared by training, forecasting and sensitivity runs.
pub const FEATURE_NAMES: [&str; 3] = ["ideal_irradiance_wm2", "cloud_cover_pct", "module_temp_f"];

const VERSION_FORMAT: &str = "%Y%m%dT%H%M%S";
const MIN_TRAINING_ROWS: usize = 20;

/// Everything one retrain produces. Serialised as the versioned model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub format_version: u32,
    pub version: String,
    /// End of the training window; no measurement at or after it was read.
    pub trained_through: NaiveDateTime,
    pub window_start: NaiveDateTime,
    pub window_days: u32,
    pub seed: u64,
    pub training_rows: usize,
    pub validation_rows: usize,
    pub feature_names: Vec<String>,
    pub scaler: MinMaxScaler,
    pub module_temp: ModuleTempModel,
    pub ann: AnnModel,
    pub svr: SvrModel,
    pub cart: CartTree,
    /// Members in order ann, svm, cart.
    pub ensemble: EnsembleModel,
}

/// Irradiance predictions, W/m², per model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemberPredictions {
    pub ann: Vec<f64>,
    pub svr: Vec<f64>,
    pub cart: Vec<f64>,
    pub ensemble: Vec<f64>,
}

impl ModelSet {
    fn members(&self) -> [&dyn Regressor; 3] {
        [&self.ann, &self.svr, &self.cart]
    }

    /// Predicts from unscaled feature rows laid out as [`FEATURE_NAMES`].
    pub fn predict_members(&self, raw: &Matrix) -> Result<MemberPredictions, PipelineError> {
        let x = self.scaler.transform(raw)?;
        let (ann, (svr, cart)) = rayon::join(
            || self.ann.predict(&x),
            || rayon::join(|| self.svr.predict(&x), || self.cart.predict(&x)),
        );
        let (ann, svr, cart) = (ann?, svr?, cart?);
        let ensemble = self
            .ensemble
            .combine_series(&[ann.clone(), svr.clone(), cart.clone()])?;
        Ok(MemberPredictions {
            ann,
            svr,
            cart,
            ensemble,
        })
    }

    /// Unclamped ensemble output for one unscaled row.
    pub fn predict_ensemble_row(&self, raw: &[f64]) -> Result<f64, PipelineError> {
        let x = self.scaler.transform_row(raw)?;
        let outputs: Vec<f64> = self.members().iter().map(|m| m.predict_row(&x)).collect();
        Ok(self.ensemble.combine(&outputs))
    }

    /// Per-feature `(min, max)` seen in training.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        self.scaler.min.iter().copied().zip(self.scaler.max.iter().copied()).collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("model set serialises");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8], origin: &str) -> Result<Self, PipelineError> {
        let format_err = |message: String| PipelineError::ModelFormat {
            path: origin.to_string(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| format_err(e.to_string()))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(format_err(format!(
                    "format version {v} is not supported (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(format_err("missing format_version".into())),
        }
        let set: Self = serde_json::from_value(value).map_err(|e| format_err(e.to_string()))?;
        if set.feature_names != FEATURE_NAMES {
            return Err(format_err(format!("unexpected features {:?}", set.feature_names)));
        }
        Ok(set)
    }
}

fn feature_row(s: &WeatherSample, module_temp: &ModuleTempModel) -> [f64; 3] {
    [
        s.ideal_irradiance_wm2,
        s.cloud_cover_pct,
        module_temp.predict_one(s.ambient_temp_f),
    ]
}

fn strided(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

/// Trains all models on `[as_of − window_days, as_of)`.
///
/// Rows are daylight steps whose irradiance, cloud cover and ambient
/// temperature were measured rather than imputed. The last
/// `validation_fraction` of them, in time order, weights the ensemble.
pub fn retrain(
    dataset: &Dataset,
    config: &Config,
    window_days: u32,
    as_of: NaiveDateTime,
) -> Result<ModelSet, PipelineError> {
    let guard = HistoryGuard::new(dataset, as_of);
    let window_start = as_of - Duration::days(i64::from(window_days));
    let window = guard.window(window_start, as_of)?;

    let days: BTreeSet<_> = window
        .iter()
        .filter(|s| !s.imputed.irradiance)
        .map(|s| s.timestamp.date())
        .collect();
    let needed = config.schedule.min_window_days;
    if days.len() < needed as usize || window_days < needed {
        return Err(PipelineError::InsufficientWindow {
            days: days.len(),
            needed,
        });
    }

    let (amb, module): (Vec<f64>, Vec<f64>) = window
        .iter()
        .filter(|s| !s.imputed.ambient_temp && !s.imputed.module_temp)
        .map(|s| (s.ambient_temp_f, s.module_temp_f))
        .unzip();
    let module_temp = ModuleTempModel::fit(&amb, &module)?;

    let rows: Vec<&WeatherSample> = window
        .iter()
        .filter(|s| {
            s.ideal_irradiance_wm2 > 0.0
                && !s.imputed.irradiance
                && !s.imputed.cloud_cover
                && !s.imputed.ambient_temp
        })
        .collect();
    if rows.len() < MIN_TRAINING_ROWS {
        return Err(ModelError::InsufficientSamples {
            needed: MIN_TRAINING_ROWS,
            got: rows.len(),
        }
        .into());
    }
    let n = rows.len();
    let n_val = ((n as f64 * config.training.validation_fraction).ceil() as usize).clamp(1, n - 1);
    let n_train = n - n_val;

    let raw: Vec<[f64; 3]> = rows.iter().map(|s| feature_row(s, &module_temp)).collect();
    let y: Vec<f64> = rows.iter().map(|s| s.irradiance_wm2).collect();
    let raw = Matrix::from_rows(&raw).expect("rows share an arity");
    let train_idx: Vec<usize> = (0..n_train).collect();
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let scaler = MinMaxScaler::fit_named(&raw.select_rows(&train_idx), names)?;
    let x = scaler.transform(&raw)?;
    let x_train = x.select_rows(&train_idx);
    let (y_train, y_val) = y.split_at(n_train);
    let x_val = x.select_rows(&(n_train..n).collect::<Vec<_>>());

    let t = &config.training;
    let ann_idx = strided(n_train, t.max_ann_samples);
    let svr_idx = strided(n_train, t.max_svr_samples);
    let pick = |idx: &[usize]| -> (Matrix, Vec<f64>) {
        (x_train.select_rows(idx), idx.iter().map(|&i| y_train[i]).collect())
    };
    let (x_ann, y_ann) = pick(&ann_idx);
    let (x_svr, y_svr) = pick(&svr_idx);
    let mut ann_params = t.ann.clone();
    ann_params.seed = t.seed;

    let (ann, svr, cart) = std::thread::scope(|scope| {
        let ann = scope.spawn(|| AnnModel::fit(&x_ann, &y_ann, &ann_params));
        let svr = scope.spawn(|| SvrModel::fit(&x_svr, &y_svr, &t.svr));
        let cart = CartTree::fit(&x_train, y_train, t.cart);
        (
            ann.join().expect("ann training thread"),
            svr.join().expect("svr training thread"),
            cart,
        )
    });
    let (ann, svr, cart) = (ann?, svr?, cart?);

    let ensemble = EnsembleModel::fit(&[("ann", &ann), ("svm", &svr), ("cart", &cart)], &x_val, y_val)?;

    Ok(ModelSet {
        format_version: MODEL_FORMAT_VERSION,
        version: as_of.format(VERSION_FORMAT).to_string(),
        trained_through: as_of,
        window_start,
        window_days,
        seed: t.seed,
        training_rows: n_train,
        validation_rows: n_val,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        scaler,
        module_temp,
        ann,
        svr,
        cart,
        ensemble,
    })
}

/// First-order Sobol indices of the unclamped ensemble over raw feature
/// ranges, in [`FEATURE_NAMES`] order.
pub fn sensitivity(
    models: &ModelSet,
    ranges: &[(f64, f64)],
    n: usize,
    seed: u64,
) -> Result<SobolReport, PipelineError> {
    if ranges.len() != FEATURE_NAMES.len() {
        return Err(ModelError::ArityMismatch {
            expected: FEATURE_NAMES.len(),
            got: ranges.len(),
        }
        .into());
    }
    let f = |x: &[f64]| models.predict_ensemble_row(x).unwrap_or(f64::NAN);
    Ok(sobol_first_order(f, ranges, n, seed)?)
}

/// Directory of `model-<version>.json` files. Writes take the lock
/// exclusively; reads share it.
#[derive(Debug)]
pub struct ModelStore {
    dir: PathBuf,
    lock: RwLock<()>,
}

impl ModelStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self {
            dir,
            lock: RwLock::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, version: &str) -> PathBuf {
        self.dir.join(format!("model-{version}.json"))
    }

    pub fn save(&self, models: &ModelSet) -> Result<PathBuf, PipelineError> {
        let _w = self.lock.write().expect("model store lock");
        let path = self.path_for(&models.version);
        write_atomic(&path, &models.to_json())?;
        Ok(path)
    }

    pub fn load(&self, version: &str) -> Result<ModelSet, PipelineError> {
        let _r = self.lock.read().expect("model store lock");
        load_file(&self.path_for(version))
    }

    /// Stored versions, oldest first.
    pub fn versions(&self) -> Result<Vec<String>, PipelineError> {
        let _r = self.lock.read().expect("model store lock");
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir).map_err(io_err(&self.dir))? {
            let entry = entry.map_err(io_err(&self.dir))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(v) = name.strip_prefix("model-").and_then(|s| s.strip_suffix(".json")) {
                if NaiveDateTime::parse_from_str(v, VERSION_FORMAT).is_ok() {
                    out.push(v.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Most recent model trained through `t` or earlier.
    pub fn latest_at_or_before(&self, t: NaiveDateTime) -> Result<ModelSet, PipelineError> {
        let version = self
            .versions()?
            .into_iter()
            .rfind(|v| NaiveDateTime::parse_from_str(v, VERSION_FORMAT).is_ok_and(|vt| vt <= t))
            .ok_or(PipelineError::NoModel(t))?;
        self.load(&version)
    }
}

pub fn load_file(path: &Path) -> Result<ModelSet, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    ModelSet::from_json(&bytes, &path.display().to_string())
}
