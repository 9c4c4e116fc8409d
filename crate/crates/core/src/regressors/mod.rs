//! Trainable irradiance regressors and their inverse-error ensemble.

mod ann;
mod cart;
mod ensemble;
mod module_temp;
mod svr;

pub use ann::{AnnModel, AnnParams, Layer, Network, NetworkGradient, Optimizer, TrainingHistory};
pub use cart::{CartParams, CartTree, TreeNode};
pub use ensemble::{EnsembleModel, EnsembleMember, RRMSE_ZERO_WEIGHT_CAP};
pub use module_temp::ModuleTempModel;
pub use svr::{rbf_kernel, SvrModel, SvrParams};

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::data_prep::DataError;
use crate::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training data is empty")]
    EmptyInput,
    #[error("expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("{features} feature rows but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite input at row {0}")]
    NonFiniteInput(usize),
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("solver stopped after {iterations} iterations with KKT gap {gap:.3e} (tolerance {tol:.1e})")]
    NotConverged { iterations: usize, gap: f64, tol: f64 },
    #[error("quadratic fit is rank deficient: {distinct} distinct inputs, need 3")]
    RankDeficient { distinct: usize },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A fitted model mapping a feature row to a scalar.
pub trait Regressor: Send + Sync {
    fn n_features(&self) -> usize;

    /// Prediction for one row of the right arity.
    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_arity(self.n_features(), x.cols())?;
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }
}

pub(crate) fn check_arity(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::ArityMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_training(x: &Matrix, y: &[f64]) -> Result<(), ModelError> {
    if x.is_empty() || x.cols() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if x.rows() != y.len() {
        return Err(ModelError::LengthMismatch {
            features: x.rows(),
            targets: y.len(),
        });
    }
    for (i, row) in x.iter_rows().enumerate() {
        if !row.iter().all(|v| v.is_finite()) || !y[i].is_finite() {
            return Err(ModelError::NonFiniteInput(i));
        }
    }
    Ok(())
}
