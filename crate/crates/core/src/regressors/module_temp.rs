use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Quadratic map from forecast ambient temperature to module temperature,
/// `m = c0 + c1·a + c2·a²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleTempModel {
    pub coefficients: [f64; 3],
}

impl ModuleTempModel {
    pub fn fit(ambient: &[f64], module: &[f64]) -> Result<Self, ModelError> {
        if ambient.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if ambient.len() != module.len() {
            return Err(ModelError::LengthMismatch {
                features: ambient.len(),
                targets: module.len(),
            });
        }
        if let Some(i) = (0..ambient.len()).find(|&i| !ambient[i].is_finite() || !module[i].is_finite()) {
            return Err(ModelError::NonFiniteInput(i));
        }
        let mut distinct: Vec<f64> = ambient.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(ModelError::RankDeficient {
                distinct: distinct.len(),
            });
        }

        // centre and scale x so the Vandermonde columns are comparable
        let n = ambient.len();
        let mean = ambient.iter().sum::<f64>() / n as f64;
        let scale = ambient.iter().map(|a| (a - mean).abs()).fold(0.0, f64::max);
        let design = DMatrix::from_fn(n, 3, |r, c| ((ambient[r] - mean) / scale).powi(c as i32));
        let rhs = DVector::from_column_slice(module);
        let sol = design
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| ModelError::InvalidParameter(e.to_string()))?;

        // expand (a - mean)/scale back into powers of a
        let (b0, b1, b2) = (sol[0], sol[1] / scale, sol[2] / (scale * scale));
        Ok(Self {
            coefficients: [
                b0 - b1 * mean + b2 * mean * mean,
                b1 - 2.0 * b2 * mean,
                b2,
            ],
        })
    }

    pub fn predict_one(&self, ambient: f64) -> f64 {
        let [c0, c1, c2] = self.coefficients;
        c0 + ambient * (c1 + ambient * c2)
    }

    pub fn predict(&self, ambient: &[f64]) -> Vec<f64> {
        ambient.iter().map(|&a| self.predict_one(a)).collect()
    }
}
