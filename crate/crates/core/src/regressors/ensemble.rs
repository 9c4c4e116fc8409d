use serde::{Deserialize, Serialize};

use super::{ModelError, Regressor};
use crate::analysis::rrmse;
use crate::Matrix;

/// Weight given to a member whose validation RRMSE is exactly zero.
pub const RRMSE_ZERO_WEIGHT_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub name: String,
    pub validation_rrmse: f64,
    pub weight: f64,
}

/// Inverse-RRMSE weighted average of member predictions. Holds only the
/// weights; member models are supplied at prediction time in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<EnsembleMember>,
}

impl EnsembleModel {
    /// Weights from each member's RRMSE on the validation slice.
    pub fn fit(
        members: &[(&str, &dyn Regressor)],
        x_val: &Matrix,
        y_val: &[f64],
    ) -> Result<Self, ModelError> {
        if members.is_empty() || x_val.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut scores = Vec::with_capacity(members.len());
        for (name, model) in members {
            let pred = model.predict(x_val)?;
            scores.push((name.to_string(), rrmse(y_val, &pred)?));
        }
        Self::from_rrmse(scores)
    }

    pub fn from_rrmse(scores: Vec<(String, f64)>) -> Result<Self, ModelError> {
        if scores.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let members = scores
            .into_iter()
            .map(|(name, e)| {
                if !(e >= 0.0 && e.is_finite()) {
                    return Err(ModelError::InvalidParameter(format!(
                        "member '{name}' has invalid RRMSE {e}"
                    )));
                }
                let weight = if e == 0.0 {
                    RRMSE_ZERO_WEIGHT_CAP
                } else {
                    (1.0 / e).min(RRMSE_ZERO_WEIGHT_CAP)
                };
                Ok(EnsembleMember {
                    name,
                    validation_rrmse: e,
                    weight,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { members })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.weight).collect()
    }

    /// Weighted mean of one output per member.
    pub fn combine(&self, outputs: &[f64]) -> f64 {
        debug_assert_eq!(outputs.len(), self.members.len());
        let (num, den) = self
            .members
            .iter()
            .zip(outputs)
            .fold((0.0, 0.0), |(n, d), (m, o)| (n + m.weight * o, d + m.weight));
        num / den
    }

    /// Combines per-member prediction vectors pointwise.
    pub fn combine_series(&self, outputs: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        if outputs.len() != self.members.len() {
            return Err(ModelError::ArityMismatch {
                expected: self.members.len(),
                got: outputs.len(),
            });
        }
        let len = outputs[0].len();
        if let Some(bad) = outputs.iter().find(|o| o.len() != len) {
            return Err(ModelError::LengthMismatch {
                features: len,
                targets: bad.len(),
            });
        }
        let mut row = vec![0.0; outputs.len()];
        Ok((0..len)
            .map(|t| {
                for (r, o) in row.iter_mut().zip(outputs) {
                    *r = o[t];
                }
                self.combine(&row)
            })
            .collect())
    }

    pub fn predict(&self, models: &[&dyn Regressor], x: &Matrix) -> Result<Vec<f64>, ModelError> {
        let outputs = models
            .iter()
            .map(|m| m.predict(x))
            .collect::<Result<Vec<_>, _>>()?;
        self.combine_series(&outputs)
    }
}
