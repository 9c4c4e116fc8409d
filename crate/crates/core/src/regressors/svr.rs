//! ε-insensitive support vector regression with an RBF kernel, solved in the
//! dual by sequential minimal optimisation with second-order working-set
//! selection.
//!
//! The dual is posed over `2n` variables `α` (upper tube) and `α*` (lower
//! tube); the fitted function is `f(x) = Σ (αᵢ − αᵢ*) K(xᵢ, x) − ρ`.

use serde::{Deserialize, Serialize};

use super::{check_arity, check_training, ModelError, Regressor};
use crate::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    /// RBF bandwidth; `None` selects `1 / (n_features · var(X))`.
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    /// `None` selects `max(10⁷, 100·n)`.
    pub max_iterations: Option<usize>,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1000.0,
            epsilon: 0.1,
            gamma: None,
            tolerance: 1e-3,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Matrix,
    /// `αᵢ − αᵢ*` for each stored support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub params: SvrParams,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub kkt_gap: f64,
    /// Dual objective `½βᵀKβ + εΣ|βᵢ| − yᵀβ` at the solution.
    pub objective: f64,
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

fn default_gamma(x: &Matrix) -> f64 {
    let v = x.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0 / x.cols() as f64
    }
}

struct Solver<'a> {
    k: &'a [f64],
    n: usize,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl Solver<'_> {
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn kern(&self, a: usize, b: usize) -> f64 {
        self.k[(a % self.n) * self.n + b % self.n]
    }

    fn q(&self, a: usize, b: usize) -> f64 {
        self.sign(a) * self.sign(b) * self.kern(a, b)
    }

    fn in_up(&self, t: usize) -> bool {
        if self.sign(t) > 0.0 {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.sign(t) > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// Maximal violating pair with second-order choice of `j`, or `None`
    /// once the violation falls under `tol`. Also returns the violation.
    fn select(&self, tol: f64) -> (Option<(usize, usize)>, f64) {
        let m = 2 * self.n;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            if self.in_up(t) {
                let v = -self.sign(t) * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..m {
            if !self.in_low(t) {
                continue;
            }
            let yg = self.sign(t) * self.grad[t];
            if yg > gmax2 {
                gmax2 = yg;
            }
            if i == usize::MAX {
                continue;
            }
            let b = gmax + yg;
            if b > 0.0 {
                let mut a = self.kern(i, i) + self.kern(t, t) - 2.0 * self.kern(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < tol || i == usize::MAX || j == usize::MAX {
            (None, gap.max(0.0))
        } else {
            (Some((i, j)), gap)
        }
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (yi, yj) = (self.sign(i), self.sign(j));
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        let (qii, qjj) = (self.kern(i, i), self.kern(j, j));
        let (mut ai, mut aj) = (old_i, old_j);

        if yi != yj {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    fn rho(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let y = self.sign(t);
            if self.alpha[t] >= self.c {
                if y < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if y > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

impl SvrModel {
    pub fn fit(x: &Matrix, y: &[f64], params: &SvrParams) -> Result<Self, ModelError> {
        check_training(x, y)?;
        if x.rows() < 2 {
            return Err(ModelError::InsufficientSamples {
                needed: 2,
                got: x.rows(),
            });
        }
        if !(params.c > 0.0 && params.c.is_finite()) {
            return Err(ModelError::InvalidParameter("C must be positive".into()));
        }
        if !(params.epsilon >= 0.0 && params.epsilon.is_finite()) {
            return Err(ModelError::InvalidParameter("epsilon must be non-negative".into()));
        }
        if !(params.tolerance > 0.0) {
            return Err(ModelError::InvalidParameter("tolerance must be positive".into()));
        }
        let gamma = match params.gamma {
            Some(g) if g > 0.0 && g.is_finite() => g,
            Some(_) => return Err(ModelError::InvalidParameter("gamma must be positive".into())),
            None => default_gamma(x),
        };

        let n = x.rows();
        let mut k = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let v = rbf_kernel(x.row(a), x.row(b), gamma);
                k[a * n + b] = v;
                k[b * n + a] = v;
            }
        }

        let mut grad = vec![0.0; 2 * n];
        for i in 0..n {
            grad[i] = params.epsilon - y[i];
            grad[i + n] = params.epsilon + y[i];
        }
        let mut solver = Solver {
            k: &k,
            n,
            c: params.c,
            alpha: vec![0.0; 2 * n],
            grad,
        };

        let max_iter = params.max_iterations.unwrap_or((100 * n).max(10_000_000));
        let mut iterations = 0;
        let gap = loop {
            let (pair, gap) = solver.select(params.tolerance);
            let Some((i, j)) = pair else { break gap };
            if iterations >= max_iter {
                return Err(ModelError::NotConverged {
                    iterations,
                    gap,
                    tol: params.tolerance,
                });
            }
            solver.update(i, j);
            iterations += 1;
        };

        let rho = solver.rho();
        let beta: Vec<f64> = (0..n).map(|i| solver.alpha[i] - solver.alpha[i + n]).collect();
        let objective = dual_objective(&k, &beta, y, params.epsilon);

        let sv: Vec<usize> = (0..n).filter(|&i| beta[i] != 0.0).collect();
        Ok(Self {
            support_vectors: x.select_rows(&sv),
            dual_coef: sv.iter().map(|&i| beta[i]).collect(),
            rho,
            gamma,
            params: params.clone(),
            iterations,
            kkt_gap: gap,
            objective,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        Regressor::predict(self, x)
    }

    /// Intercept `b = −ρ`.
    pub fn bias(&self) -> f64 {
        -self.rho
    }

    pub fn support_count(&self) -> usize {
        self.dual_coef.len()
    }
}

/// `½βᵀKβ + εΣ|βᵢ| − yᵀβ` for a row-major kernel matrix.
pub(crate) fn dual_objective(k: &[f64], beta: &[f64], y: &[f64], epsilon: f64) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for a in 0..n {
        for b in 0..n {
            quad += beta[a] * beta[b] * k[a * n + b];
        }
    }
    0.5 * quad + beta.iter().map(|b| epsilon * b.abs()).sum::<f64>()
        - beta.iter().zip(y).map(|(b, t)| b * t).sum::<f64>()
}

impl Regressor for SvrModel {
    fn n_features(&self) -> usize {
        self.support_vectors.cols()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.support_vectors
            .iter_rows()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf_kernel(sv, row, self.gamma))
            .sum::<f64>()
            - self.rho
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_arity(self.n_features(), x.cols())?;
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize) -> (Matrix, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        (Matrix::from_vec(n, 1, xs), ys)
    }

    /// Enumerates every active set: each βᵢ at −C, 0, +C or free with a
    /// fixed sign, solving the stationarity system on the free block.
    fn brute_force_optimum(x: &Matrix, y: &[f64], c: f64, eps: f64, gamma: f64) -> f64 {
        let n = x.rows();
        let k: Vec<f64> = (0..n * n)
            .map(|ab| rbf_kernel(x.row(ab / n), x.row(ab % n), gamma))
            .collect();
        let mut best = f64::INFINITY;
        let mut state = vec![0u8; n];
        loop {
            let free: Vec<usize> = (0..n).filter(|&i| state[i] >= 3).collect();
            let mut beta = vec![0.0; n];
            for i in 0..n {
                beta[i] = match state[i] {
                    1 => c,
                    2 => -c,
                    _ => 0.0,
                };
            }
            let m = free.len();
            let feasible = if m == 0 {
                beta.iter().sum::<f64>().abs() < 1e-9
            } else {
                let mut a = DMatrix::zeros(m + 1, m + 1);
                let mut rhs = DVector::zeros(m + 1);
                for (r, &i) in free.iter().enumerate() {
                    let s = if state[i] == 3 { 1.0 } else { -1.0 };
                    for (cc, &j) in free.iter().enumerate() {
                        a[(r, cc)] = k[i * n + j];
                    }
                    a[(r, m)] = 1.0;
                    a[(m, r)] = 1.0;
                    let fixed: f64 = (0..n)
                        .filter(|j| state[*j] < 3)
                        .map(|j| k[i * n + j] * beta[j])
                        .sum();
                    rhs[r] = y[i] - eps * s - fixed;
                }
                rhs[m] = -(0..n).filter(|j| state[*j] < 3).map(|j| beta[j]).sum::<f64>();
                match a.lu().solve(&rhs) {
                    Some(sol) => {
                        let mut ok = true;
                        for (r, &i) in free.iter().enumerate() {
                            let v = sol[r];
                            let in_range = if state[i] == 3 { v >= 0.0 && v <= c } else { v <= 0.0 && v >= -c };
                            ok &= in_range;
                            beta[i] = v;
                        }
                        ok
                    }
                    None => false,
                }
            };
            if feasible {
                best = best.min(dual_objective(&k, &beta, y, eps));
            }
            let mut d = 0;
            loop {
                if d == n {
                    return best;
                }
                state[d] += 1;
                if state[d] < 5 {
                    break;
                }
                state[d] = 0;
                d += 1;
            }
        }
    }

    fn tight() -> SvrParams {
        SvrParams {
            tolerance: 1e-9,
            ..SvrParams::default()
        }
    }

    #[test]
    fn line_fits_inside_tube() {
        let (x, y) = line(10);
        let model = SvrModel::fit(&x, &y, &SvrParams::default()).unwrap();
        let pred = model.predict(&x).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() <= 0.1 + 1e-3, "{p} vs {t}");
        }
    }

    #[test]
    fn duplicate_point_leaves_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (3.0 * r[0]).sin() + r[1]).collect();
        let params = SvrParams { gamma: Some(2.0), c: 10.0, ..tight() };
        let a = SvrModel::fit(&Matrix::from_rows(&rows).unwrap(), &y, &params).unwrap();
        let mut rows2 = rows.clone();
        rows2.push(rows[4].clone());
        let mut y2 = y.clone();
        y2.push(y[4]);
        let b = SvrModel::fit(&Matrix::from_rows(&rows2).unwrap(), &y2, &params).unwrap();
        for _ in 0..50 {
            let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            assert!((a.predict_row(&p) - b.predict_row(&p)).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_brute_force_on_tiny_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 3..=6 {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| 4.0 * r[0] * r[0] + rng.random_range(-0.3..0.3)).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let params = SvrParams { c: 2.0, gamma: Some(3.0), ..tight() };
            let model = SvrModel::fit(&x, &y, &params).unwrap();
            let oracle = brute_force_optimum(&x, &y, 2.0, 0.1, 3.0);
            assert!((model.objective - oracle).abs() < 1e-4, "n={n}: {} vs {oracle}", model.objective);
        }
    }

    #[test]
    fn free_support_vectors_sit_on_tube_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (6.0 * r[0]).sin()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let model = SvrModel::fit(&x, &y, &SvrParams { gamma: Some(10.0), ..tight() }).unwrap();
        let mut checked = 0;
        for (sv, coef) in model.support_vectors.iter_rows().zip(&model.dual_coef) {
            assert!(coef.abs() <= model.params.c + 1e-9);
            if coef.abs() < model.params.c - 1e-6 {
                let i = rows.iter().position(|r| r[0] == sv[0]).unwrap();
                let r = y[i] - model.predict_row(sv);
                assert!((r.abs() - 0.1).abs() < 1e-6, "residual {r}");
                checked += 1;
            }
        }
        assert!(checked > 0);
        // points strictly inside the tube carry no weight
        let pred = model.predict(&x).unwrap();
        for (i, r) in rows.iter().enumerate() {
            if (y[i] - pred[i]).abs() < 0.1 - 1e-6 {
                assert!(!model.support_vectors.iter_rows().any(|sv| sv[0] == r[0]));
            }
        }
    }

    #[test]
    fn far_input_returns_bias() {
        let (x, y) = line(10);
        let model = SvrModel::fit(&x, &y, &SvrParams::default()).unwrap();
        let far = model.predict_row(&[1e6]);
        assert_eq!(far, model.bias());
        assert_eq!(model.predict(&x).unwrap(), model.predict(&x).unwrap());
    }

    #[test]
    fn iteration_cap_reported() {
        let x = Matrix::from_vec(30, 1, (0..30).map(|i| i as f64 / 29.0).collect());
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.9).sin() * 5.0).collect();
        let params = SvrParams {
            max_iterations: Some(1),
            ..SvrParams::default()
        };
        let r = SvrModel::fit(&x, &y, &params);
        assert!(matches!(r, Err(ModelError::NotConverged { iterations: 1, .. })), "{r:?}");
    }

    #[test]
    fn input_validation() {
        let x = Matrix::from_vec(1, 1, vec![0.0]);
        assert!(matches!(SvrModel::fit(&x, &[1.0], &SvrParams::default()), Err(ModelError::InsufficientSamples { .. })));
        let (x, y) = line(5);
        let model = SvrModel::fit(&x, &y, &SvrParams::default()).unwrap();
        assert!(model.predict(&Matrix::zeros(1, 2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dual_coefficients_bounded(seed in 0u64..1000, c in 0.5f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| 10.0 * r[0] - 3.0 * r[1] + rng.random_range(-1.0..1.0)).collect();
            let model = SvrModel::fit(&Matrix::from_rows(&rows).unwrap(), &y, &SvrParams { c, ..SvrParams::default() }).unwrap();
            prop_assert!(model.dual_coef.iter().all(|b| b.abs() <= c + 1e-12));
            prop_assert!(model.dual_coef.iter().sum::<f64>().abs() < 1e-6 * c);
        }
    }
}
