//! Fully connected feed-forward network with sigmoid hidden units and a
//! linear output, trained by mini-batch gradient descent on squared error.
//!
//! Early stopping watches the *training* loss: once `patience` consecutive
//! epochs fail to lower it by the relative tolerance, training halts. The
//! weights kept are those of the epoch with the lowest *validation* loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_arity, check_training, ModelError, Regressor};
use crate::data_prep::TargetScaler;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnParams {
    /// Node counts from input to output; the last entry must be 1.
    pub layer_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Trailing fraction of the rows held out for validation.
    pub validation_fraction: f64,
    pub patience: usize,
    /// Relative training-loss improvement an epoch must achieve to count.
    pub min_relative_improvement: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            layer_widths: vec![3, 32, 32, 16, 16, 8, 1],
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 500,
            validation_fraction: 0.1,
            patience: 2,
            min_relative_improvement: 0.01,
            optimizer: Optimizer::Adam,
            seed: 42,
        }
    }
}

/// Weights are `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Matrix::zeros(self.weights.rows(), self.weights.cols()),
            biases: vec![0.0; self.biases.len()],
        }
    }

    fn n_params(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Loss gradient with the same layout as [`Network::layers`].
pub type NetworkGradient = Vec<Layer>;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Network {
    /// Glorot-uniform weights (scaled by 4 for sigmoid layers), zero biases.
    pub fn new_random(widths: &[usize], seed: u64) -> Result<Self, ModelError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(ModelError::InvalidParameter(format!(
                "layer widths {widths:?} need at least input and output layers"
            )));
        }
        if widths[widths.len() - 1] != 1 {
            return Err(ModelError::InvalidParameter("output layer must have width 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(li, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let gain = if li == last { 1.0 } else { 4.0 };
                let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Network with every weight and bias set to `value`.
    pub fn constant(widths: &[usize], value: f64) -> Result<Self, ModelError> {
        let mut net = Self::new_random(widths, 0)?;
        for p in net.params_mut() {
            *p = value;
        }
        Ok(net)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.biases.len()));
        w
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Weighted sum plus bias, sigmoid on hidden layers, identity on output.
    pub fn forward(&self, input: &[f64]) -> f64 {
        let mut act = input.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            act = (0..layer.biases.len())
                .map(|o| {
                    let z = dot(layer.weights.row(o), &act) + layer.biases[o];
                    if li == last {
                        z
                    } else {
                        sigmoid(z)
                    }
                })
                .collect();
        }
        act[0]
    }

    /// Mean squared error over the rows.
    pub fn loss(&self, x: &Matrix, y: &[f64]) -> f64 {
        let n = x.rows() as f64;
        x.iter_rows()
            .zip(y)
            .map(|(r, t)| (self.forward(r) - t).powi(2))
            .sum::<f64>()
            / n
    }

    /// Mean squared error and its gradient by back-propagation.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[f64]) -> (f64, NetworkGradient) {
        let rows: Vec<usize> = (0..x.rows()).collect();
        self.batch_gradient(x, y, &rows)
    }

    fn batch_gradient(&self, x: &Matrix, y: &[f64], rows: &[usize]) -> (f64, NetworkGradient) {
        let mut grad: NetworkGradient = self.layers.iter().map(Layer::zeros_like).collect();
        let scale = 1.0 / rows.len() as f64;
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);

        for &r in rows {
            acts.clear();
            acts.push(x.row(r).to_vec());
            for (li, layer) in self.layers.iter().enumerate() {
                let prev = &acts[li];
                let next: Vec<f64> = (0..layer.biases.len())
                    .map(|o| {
                        let z = dot(layer.weights.row(o), prev) + layer.biases[o];
                        if li == last {
                            z
                        } else {
                            sigmoid(z)
                        }
                    })
                    .collect();
                acts.push(next);
            }
            let err = acts[last + 1][0] - y[r];
            loss += err * err;

            let mut delta = vec![2.0 * err * scale];
            for li in (0..self.layers.len()).rev() {
                let input = &acts[li];
                let g = &mut grad[li];
                for (o, d) in delta.iter().enumerate() {
                    g.biases[o] += d;
                    for (w, a) in g.weights.row_mut(o).iter_mut().zip(input) {
                        *w += d * a;
                    }
                }
                if li == 0 {
                    break;
                }
                let layer = &self.layers[li];
                delta = (0..input.len())
                    .map(|i| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(o, d)| d * layer.weights.get(o, i))
                            .sum();
                        back * input[i] * (1.0 - input[i])
                    })
                    .collect();
            }
        }
        (loss * scale, grad)
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| {
            let Layer { weights, biases } = l;
            weights.as_mut_slice().iter_mut().chain(biases.iter_mut())
        })
    }

    pub fn set_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_params(), "parameter count");
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }
}

pub(crate) fn flatten(grad: &NetworkGradient) -> Vec<f64> {
    grad.iter()
        .flat_map(|l| l.weights.as_slice().iter().chain(&l.biases).copied())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub epochs_without_improvement: usize,
    pub stopped_early: bool,
}

/// Trained network plus the min-max map of its targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub network: Network,
    pub target_scaler: TargetScaler,
    pub history: TrainingHistory,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AnnModel {
    /// `x` should already be scaled to roughly [0, 1].
    pub fn fit(x: &Matrix, y: &[f64], params: &AnnParams) -> Result<Self, ModelError> {
        let network = Network::new_random(&params.layer_widths, params.seed)?;
        Self::fit_from(network, x, y, params)
    }

    /// Trains starting from the given network.
    pub fn fit_from(
        mut network: Network,
        x: &Matrix,
        y: &[f64],
        params: &AnnParams,
    ) -> Result<Self, ModelError> {
        check_training(x, y)?;
        check_arity(network.input_width(), x.cols())?;
        if params.batch_size == 0 {
            return Err(ModelError::InvalidParameter("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&params.validation_fraction) {
            return Err(ModelError::InvalidParameter(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        if !(params.learning_rate >= 0.0 && params.learning_rate.is_finite()) {
            return Err(ModelError::InvalidParameter("learning_rate must be >= 0".into()));
        }

        let n = x.rows();
        let n_val = if n >= 2 {
            ((n as f64 * params.validation_fraction).ceil() as usize).min(n - 1)
        } else {
            0
        };
        let n_train = n - n_val;

        let train_targets = &y[..n_train];
        let target_scaler = TargetScaler::fit(train_targets).unwrap_or(TargetScaler {
            min: train_targets[0],
            max: train_targets[0] + 1.0,
        });
        let ys: Vec<f64> = y.iter().map(|&v| target_scaler.transform(v)).collect();
        let train_rows: Vec<usize> = (0..n_train).collect();
        let x_train = x.select_rows(&train_rows);
        let x_val = x.select_rows(&(n_train..n).collect::<Vec<_>>());
        let (y_train, y_val) = ys.split_at(n_train);

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
        let n_params = network.n_params();
        let mut adam = AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        };
        let mut history = TrainingHistory {
            best_validation_loss: f64::INFINITY,
            ..TrainingHistory::default()
        };
        let mut best_network = network.clone();
        let mut best_train = f64::INFINITY;
        let mut order = train_rows.clone();

        for epoch in 0..params.max_epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let (_, grad) = network.batch_gradient(&x_train, y_train, batch);
                apply_update(&mut network, &grad, params, &mut adam);
            }

            let train_loss = network.loss(&x_train, y_train);
            let val_loss = if n_val > 0 {
                network.loss(&x_val, y_val)
            } else {
                train_loss
            };
            if !train_loss.is_finite() || !val_loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            history.train_loss.push(train_loss);
            history.validation_loss.push(val_loss);

            if val_loss < history.best_validation_loss {
                history.best_validation_loss = val_loss;
                history.best_epoch = epoch;
                best_network = network.clone();
            }
            if train_loss < best_train * (1.0 - params.min_relative_improvement) {
                best_train = train_loss;
                history.epochs_without_improvement = 0;
            } else {
                history.epochs_without_improvement += 1;
                if history.epochs_without_improvement >= params.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }

        Ok(Self {
            network: best_network,
            target_scaler,
            history,
        })
    }

    /// Predictions in target units.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        Regressor::predict(self, x)
    }

    /// Raw network output before inverse scaling.
    pub fn predict_scaled(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_arity(self.network.input_width(), x.cols())?;
        Ok(x.iter_rows().map(|r| self.network.forward(r)).collect())
    }
}

impl Regressor for AnnModel {
    fn n_features(&self) -> usize {
        self.network.input_width()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.target_scaler.inverse(self.network.forward(row))
    }
}

fn apply_update(net: &mut Network, grad: &NetworkGradient, params: &AnnParams, adam: &mut AdamState) {
    let lr = params.learning_rate;
    let g = flatten(grad);
    match params.optimizer {
        Optimizer::Sgd => {
            for (p, gi) in net.params_mut().zip(&g) {
                *p -= lr * gi;
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(adam.t);
            let c2 = 1.0 - ADAM_BETA2.powi(adam.t);
            for (k, (p, gi)) in net.params_mut().zip(&g).enumerate() {
                adam.m[k] = ADAM_BETA1 * adam.m[k] + (1.0 - ADAM_BETA1) * gi;
                adam.v[k] = ADAM_BETA2 * adam.v[k] + (1.0 - ADAM_BETA2) * gi * gi;
                let m_hat = adam.m[k] / c1;
                let v_hat = adam.v[k] / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::r_squared;
    use rand_distr::{Distribution, Normal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    /// Independent forward pass with explicit loops.
    fn naive_forward(net: &Network, input: &[f64]) -> f64 {
        let mut a = input.to_vec();
        for (li, layer) in net.layers.iter().enumerate() {
            let mut next = Vec::new();
            for o in 0..layer.weights.rows() {
                let mut z = layer.biases[o];
                for i in 0..layer.weights.cols() {
                    z += layer.weights.get(o, i) * a[i];
                }
                next.push(if li + 1 == net.layers.len() { z } else { 1.0 / (1.0 + (-z).exp()) });
            }
            a = next;
        }
        a[0]
    }

    fn max_gradient_error(net: &Network, x: &Matrix, y: &[f64]) -> f64 {
        let (_, grad) = net.loss_and_gradient(x, y);
        let analytic = flatten(&grad);
        let base = net.params();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += h;
            let mut plus = net.clone();
            plus.set_params(&p);
            p[k] -= 2.0 * h;
            let mut minus = net.clone();
            minus.set_params(&p);
            let numeric = (plus.loss(x, y) - minus.loss(x, y)) / (2.0 * h);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[k] - numeric).abs() / denom);
        }
        worst
    }

    fn perturbed(widths: &[usize], seed: u64) -> Network {
        let mut net = Network::new_random(widths, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for p in net.params_mut() {
            *p = normal.sample(&mut rng);
        }
        net
    }

    #[test]
    fn gradient_matches_finite_differences_small() {
        let net = perturbed(&[3, 4, 1], 1);
        let x = random_matrix(12, 3, 2);
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let err = max_gradient_error(&net, &x, &y);
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn gradient_matches_finite_differences_deep() {
        let net = perturbed(&[3, 6, 5, 4, 1], 9);
        let x = random_matrix(8, 3, 3);
        let y: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
        assert!(max_gradient_error(&net, &x, &y) < 1e-4);
    }

    #[test]
    fn zero_network_outputs_sigmoid_midpoint() {
        // with every weight zero the hidden units sit at σ(0) = 0.5; a sigmoid
        // output unit would give 0.5 as well
        let net = Network::constant(&[3, 4, 1], 0.0).unwrap();
        assert_eq!(net.forward(&[0.3, 0.1, 0.9]), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        let half = Network::constant(&[3, 4, 1], 0.0).unwrap();
        let mut h = half.clone();
        h.layers[1].weights.set(0, 0, 1.0);
        assert_eq!(h.forward(&[1.0, 1.0, 1.0]), 0.5);
    }

    #[test]
    fn forward_matches_naive_loops() {
        let net = perturbed(&[3, 5, 4, 1], 4);
        for row in random_matrix(20, 3, 5).iter_rows() {
            assert!((net.forward(row) - naive_forward(&net, row)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let x = random_matrix(64, 3, 6);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0]).collect();
        for optimizer in [Optimizer::Sgd, Optimizer::Adam] {
            let params = AnnParams {
                learning_rate: 0.0,
                max_epochs: 1,
                optimizer,
                ..AnnParams::default()
            };
            let start = Network::new_random(&params.layer_widths, params.seed).unwrap();
            let model = AnnModel::fit(&x, &y, &params).unwrap();
            assert_eq!(model.network, start);
        }
    }

    #[test]
    fn learns_identity_feature() {
        let x = random_matrix(1000, 3, 7);
        let y: Vec<f64> = x.iter_rows().map(|r| 200.0 + 800.0 * r[1]).collect();
        let model = AnnModel::fit(&x, &y, &AnnParams::default()).unwrap();
        let x_val = x.select_rows(&(900..1000).collect::<Vec<_>>());
        let pred = model.predict(&x_val).unwrap();
        let r2 = r_squared(&y[900..], &pred).unwrap();
        assert!(r2 > 0.99, "validation R² {r2}, history {:?}", model.history.train_loss);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let x = random_matrix(200, 3, 8);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0] * r[2]).collect();
        let params = AnnParams {
            max_epochs: 5,
            ..AnnParams::default()
        };
        let a = AnnModel::fit(&x, &y, &params).unwrap();
        let b = AnnModel::fit(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        let row = Matrix::from_rows(&[vec![0.2, 0.4, 0.6]]).unwrap();
        assert_eq!(a.predict(&row).unwrap(), a.predict(&row).unwrap());
    }

    #[test]
    fn best_validation_weights_restored() {
        let x = random_matrix(300, 3, 10);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0] + r[1]).collect();
        let params = AnnParams {
            max_epochs: 30,
            ..AnnParams::default()
        };
        let model = AnnModel::fit(&x, &y, &params).unwrap();
        let h = &model.history;
        let min = h.validation_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(h.best_validation_loss, min);
        let n_val = 30;
        let xv = x.select_rows(&(300 - n_val..300).collect::<Vec<_>>());
        let yv: Vec<f64> = y[300 - n_val..]
            .iter()
            .map(|&v| model.target_scaler.transform(v))
            .collect();
        assert!((model.network.loss(&xv, &yv) - min).abs() < 1e-12);
    }

    #[test]
    fn divergence_reported() {
        let x = random_matrix(64, 3, 11);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0]).collect();
        let params = AnnParams {
            layer_widths: vec![3, 4, 1],
            learning_rate: 1e200,
            optimizer: Optimizer::Sgd,
            ..AnnParams::default()
        };
        assert!(matches!(
            AnnModel::fit(&x, &y, &params),
            Err(ModelError::Diverged { .. })
        ));
    }

    #[test]
    fn arity_checked() {
        let x = random_matrix(40, 3, 12);
        let y = vec![1.0; 40];
        let params = AnnParams {
            max_epochs: 1,
            ..AnnParams::default()
        };
        let model = AnnModel::fit(&x, &y, &params).unwrap();
        assert!(matches!(
            model.predict(&Matrix::zeros(1, 2)),
            Err(ModelError::ArityMismatch { .. })
        ));
        assert!(AnnModel::fit(&random_matrix(40, 2, 1), &y, &params).is_err());
    }
}
