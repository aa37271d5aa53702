//! Binary SVM on precomputed Gram matrices, solved with SMO using
//! second-order working-set selection.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::pathkernel::GramMatrix;

pub const GRAM_SYMMETRY_TOL: f64 = 1e-8;
pub const ALPHA_FLOOR: f64 = 1e-9;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
}

fn default_c() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_passes() -> usize {
    200
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: default_c(),
            tol: default_tol(),
            max_passes: default_max_passes(),
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Config(format!("SVM C must be positive, got {}", self.c)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("SVM tol must be positive, got {}", self.tol)));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("SVM max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub support: Vec<usize>,
    pub labels: Vec<f64>,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_hash: Option<String>,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmModel {
    pub fn train_size(&self) -> usize {
        self.alpha.len()
    }

    /// `sum_i alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`.
    pub fn dual_objective(&self, gram: &DMatrix<f64>) -> f64 {
        let n = self.alpha.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += self.alpha[i] * self.alpha[j] * self.labels[i] * self.labels[j] * gram[(i, j)];
            }
        }
        self.alpha.iter().sum::<f64>() - 0.5 * quad
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::Input(format!("labels must be +1 or -1, found {bad}")));
    }
    Ok(())
}

pub fn svm_train(gram: &GramMatrix, labels: &[f64], params: &SvmParams) -> Result<SvmModel> {
    svm_train_values(&gram.values, labels, params)
}

pub fn svm_train_values(k: &DMatrix<f64>, labels: &[f64], params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    let n = labels.len();
    if k.nrows() != k.ncols() {
        return Err(Error::Input(format!("Gram must be square, got {}x{}", k.nrows(), k.ncols())));
    }
    if k.nrows() != n {
        return Err(Error::Shape(format!("Gram is {n0}x{n0} but {n} labels given", n0 = k.nrows())));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("Gram contains non-finite entries".into()));
    }
    let defect = (k - k.transpose()).amax();
    if defect > GRAM_SYMMETRY_TOL {
        return Err(Error::Input(format!("Gram is asymmetric (max |G - G^T| = {defect:e})")));
    }
    check_labels(labels)?;
    if !(labels.contains(&1.0) && labels.contains(&-1.0)) {
        return Err(Error::DegenerateLabels);
    }

    let c = params.c;
    let y = labels;
    let mut alpha = vec![0.0; n];
    // Gradient of the minimized dual 1/2 a^T Q a - e^T a, with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let max_iter = params.max_passes.saturating_mul(n);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let score = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && score >= gmax {
                gmax = score;
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let score = y[t] * grad[t];
            gmax2 = gmax2.max(score);
            let diff = gmax + score;
            if diff > 0.0 {
                let mut quad = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -diff * diff / quad;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < params.tol || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[(i, j)];
        if y[i] != y[j] {
            let mut quad = k[(i, i)] + k[(j, j)] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k[(i, i)] + k[(j, j)] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[(t, i)] * di + y[j] * k[(t, j)] * dj);
        }
    }

    // Bias from free vectors when available, otherwise the midpoint of the
    // feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 { free_sum / free_count as f64 } else { (ub + lb) / 2.0 };

    for a in alpha.iter_mut() {
        if *a < ALPHA_FLOOR {
            *a = 0.0;
        }
    }
    let support = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        alpha,
        bias: -rho,
        support,
        labels: labels.to_vec(),
        c,
        kernel_hash: None,
        iterations,
        converged,
    })
}

/// `sum_i alpha_i y_i G[j][i] + b` for each row of a test-by-train Gram.
pub fn decision_values(model: &SvmModel, cross: &DMatrix<f64>) -> Result<Vec<f64>> {
    if cross.ncols() != model.train_size() {
        return Err(Error::Shape(format!(
            "cross Gram has {} columns, model was trained on {} points",
            cross.ncols(),
            model.train_size()
        )));
    }
    Ok((0..cross.nrows())
        .into_par_iter()
        .map(|r| {
            model
                .support
                .iter()
                .map(|&i| model.alpha[i] * model.labels[i] * cross[(r, i)])
                .sum::<f64>()
                + model.bias
        })
        .collect())
}

pub fn svm_predict(model: &SvmModel, cross_gram: &GramMatrix) -> Result<Vec<f64>> {
    svm_predict_values(model, &cross_gram.values)
}

pub fn svm_predict_values(model: &SvmModel, cross: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(decision_values(model, cross)?
        .into_iter()
        .map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
        .collect())
}

pub fn accuracy(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Shape("accuracy of an empty prediction vector".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use nalgebra::DVector;

    fn m(n: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, vals)
    }

    fn params(c: f64) -> SvmParams {
        SvmParams {
            c,
            ..Default::default()
        }
    }

    fn feasible(model: &SvmModel) {
        for &a in &model.alpha {
            assert!((0.0..=model.c).contains(&a));
        }
        let s: f64 = model.alpha.iter().zip(&model.labels).map(|(a, y)| a * y).sum();
        assert!(s.abs() < 1e-6, "sum alpha y = {s}");
    }

    #[test]
    fn identity_gram_two_points() {
        let k = m(2, &[1.0, 0.0, 0.0, 1.0]);
        let y = [1.0, -1.0];
        let model = svm_train_values(&k, &y, &params(1.0)).unwrap();
        assert!((model.alpha[0] - 1.0).abs() < 1e-12 && (model.alpha[1] - 1.0).abs() < 1e-12);
        assert!(model.bias.abs() < 1e-12);
        feasible(&model);
        let preds = svm_predict_values(&model, &k).unwrap();
        assert_eq!(accuracy(&preds, &y).unwrap(), 1.0);
    }

    #[test]
    fn separable_line() {
        let k = m(2, &[1.0, -1.0, -1.0, 1.0]);
        let y = [-1.0, 1.0];
        let model = svm_train_values(&k, &y, &params(10.0)).unwrap();
        let dv = decision_values(&model, &k).unwrap();
        assert!(dv[0] < 0.0 && dv[1] > 0.0);
        assert!((dv[0] + dv[1]).abs() < 1e-9);
        feasible(&model);
    }

    #[test]
    fn guards() {
        let k = m(2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(svm_train_values(&k, &[1.0, 1.0], &params(1.0)), Err(Error::DegenerateLabels)));
        let skew = m(2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(svm_train_values(&skew, &[1.0, -1.0], &params(1.0)), Err(Error::Input(_))));
        assert!(matches!(svm_train_values(&k, &[1.0, -1.0, 1.0], &params(1.0)), Err(Error::Shape(_))));
        assert!(matches!(svm_train_values(&k, &[1.0, -1.0], &params(0.0)), Err(Error::Config(_))));
        let model = svm_train_values(&k, &[1.0, -1.0], &params(1.0)).unwrap();
        assert!(matches!(svm_predict_values(&model, &DMatrix::zeros(1, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_row_predicts_sign_of_bias() {
        let k = m(3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 1.5]);
        let y = [1.0, 1.0, -1.0];
        let model = svm_train_values(&k, &y, &params(1.0)).unwrap();
        let pred = svm_predict_values(&model, &DMatrix::zeros(1, 3)).unwrap();
        assert_eq!(pred[0], if model.bias >= 0.0 { 1.0 } else { -1.0 });
        let zero_bias = SvmModel { bias: 0.0, ..model };
        assert_eq!(svm_predict_values(&zero_bias, &DMatrix::zeros(1, 3)).unwrap(), vec![1.0]);
    }

    #[test]
    fn accuracy_examples() {
        let y = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(accuracy(&neg, &y).unwrap(), 0.0);
        assert_eq!(accuracy(&[1.0, -1.0, -1.0, 1.0], &y).unwrap(), 0.5);
        assert!(matches!(accuracy(&[1.0], &y), Err(Error::Shape(_))));
    }

    fn linear_problem(rng: &mut SeededRng, n: usize, dim: usize) -> (DMatrix<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(n, dim, |_, _| rng.standard_normal());
        let mut y: Vec<f64> = (0..n).map(|_| rng.sign()).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        (&x * x.transpose(), y)
    }

    #[test]
    fn separable_training_rows_are_recovered() {
        let mut rng = SeededRng::new(4);
        for _ in 0..10 {
            let n = 12;
            let w = [1.0, -0.5, 0.25];
            let x = DMatrix::from_fn(n, 3, |_, _| rng.normal(0.0, 1.0));
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let s: f64 = (0..3).map(|c| w[c] * x[(i, c)]).sum();
                    if s >= 0.0 { 1.0 } else { -1.0 }
                })
                .collect();
            if !(y.contains(&1.0) && y.contains(&-1.0)) {
                continue;
            }
            let k = &x * x.transpose();
            let model = svm_train_values(&k, &y, &params(1e4)).unwrap();
            assert_eq!(svm_predict_values(&model, &k).unwrap(), y);
        }
    }

    #[test]
    fn duplicate_of_free_support_vector_shares_its_label() {
        let mut rng = SeededRng::new(9);
        let mut checked = 0;
        for _ in 0..20 {
            let (k, y) = linear_problem(&mut rng, 10, 3);
            let model = svm_train_values(&k, &y, &params(1.0)).unwrap();
            for &s in &model.support {
                if model.alpha[s] < model.c - 1e-6 {
                    let row = k.row(s).clone_owned();
                    let pred = svm_predict_values(&model, &DMatrix::from_rows(&[row])).unwrap();
                    assert_eq!(pred[0], y[s]);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    /// Projected gradient ascent on the dual with Nesterov momentum; the
    /// projection onto the box-and-hyperplane set is found by bisection on
    /// the multiplier of `y^T a = 0`.
    fn reference_dual(k: &DMatrix<f64>, y: &[f64], c: f64) -> f64 {
        let n = y.len();
        let yv = DVector::from_column_slice(y);
        let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
        let lip = q.clone().symmetric_eigen().eigenvalues.max().max(1e-12);
        let project = |v: &DVector<f64>| -> DVector<f64> {
            let at = |lam: f64| v.zip_map(&yv, |vi, yi| (vi - lam * yi).clamp(0.0, c));
            let (mut lo, mut hi) = (-1e6, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if at(mid).dot(&yv) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            at(0.5 * (lo + hi))
        };
        let objective = |a: &DVector<f64>| a.sum() - 0.5 * (a.transpose() * &q * a)[(0, 0)];
        let mut a = DVector::zeros(n);
        let mut prev = a.clone();
        for it in 0..20_000 {
            let mom = it as f64 / (it as f64 + 3.0);
            let z = &a + (&a - &prev) * mom;
            let g = DVector::from_element(n, 1.0) - &q * &z;
            prev = a;
            a = project(&(z + g / lip));
        }
        objective(&a)
    }

    #[test]
    fn smo_matches_reference_dual() {
        let mut rng = SeededRng::new(2024);
        let p = SvmParams {
            c: 1.0,
            tol: 1e-6,
            max_passes: 10_000,
        };
        for _ in 0..50 {
            let dim = 1 + rng.below(6);
            let (k, y) = linear_problem(&mut rng, 6, dim);
            let model = svm_train_values(&k, &y, &p).unwrap();
            feasible(&model);
            let ours = model.dual_objective(&k);
            let reference = reference_dual(&k, &y, 1.0);
            let rel = (ours - reference).abs() / reference.abs().max(1e-12);
            assert!(rel < 1e-4, "smo {ours} vs reference {reference}");
        }
    }

    #[test]
    fn json_round_trip_and_determinism() {
        let mut rng = SeededRng::new(77);
        let (k, y) = linear_problem(&mut rng, 8, 2);
        let a = svm_train_values(&k, &y, &params(1.0)).unwrap();
        let b = svm_train_values(&k, &y, &params(1.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(svm_predict_values(&a, &k).unwrap(), svm_predict_values(&b, &k).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        a.save(&path).unwrap();
        assert_eq!(SvmModel::load(&path).unwrap(), a);
    }
}
