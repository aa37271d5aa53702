//! Full-batch training with trajectory recording.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::rng::SeededRng;
use crate::xordata::LabeledDataset;

/// A scalar predictor with a parameter gradient.
pub trait Differentiable: Sync {
    fn input_dim(&self) -> usize;
    fn param_count(&self) -> usize;
    fn predict(&self, x: &[f64], theta: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>>;

    /// Whether parameter `k` is subject to weight decay.
    fn is_decayed(&self, _k: usize) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    Bce,
}

const BCE_CLIP: f64 = 1e-7;

fn check_pairs(preds: &[f64], labels: &[f64]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Shape("loss over an empty batch".into()));
    }
    Ok(())
}

fn bce_prob(pred: f64) -> f64 {
    ((1.0 + pred) / 2.0).clamp(BCE_CLIP, 1.0 - BCE_CLIP)
}

/// Mean loss. BCE reads `pred` in [-1, 1] as `p = (1 + pred) / 2` and the
/// label +1 as class 1.
pub fn loss(preds: &[f64], labels: &[f64], kind: LossKind) -> Result<f64> {
    check_pairs(preds, labels)?;
    let n = preds.len() as f64;
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| match kind {
            LossKind::Mse => (p - y).powi(2),
            LossKind::Bce => {
                let q = bce_prob(p);
                if y > 0.0 {
                    -q.ln()
                } else {
                    -(1.0 - q).ln()
                }
            }
        })
        .sum();
    Ok(total / n)
}

/// Derivative of the mean loss with respect to each prediction.
pub fn loss_derivative(preds: &[f64], labels: &[f64], kind: LossKind) -> Result<Vec<f64>> {
    check_pairs(preds, labels)?;
    let n = preds.len() as f64;
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| match kind {
            LossKind::Mse => 2.0 * (p - y) / n,
            LossKind::Bce => {
                let q = bce_prob(p);
                let dq = if y > 0.0 { -1.0 / q } else { 1.0 / (1.0 - q) };
                0.5 * dq / n
            }
        })
        .collect())
}

/// i.i.d. standard normal draws from the documented seeded stream.
pub fn init_params(length: usize, seed: u64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::Shape("parameter vector length must be >= 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    Ok((0..length).map(|_| rng.standard_normal()).collect())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update.
pub fn adam_step(
    state: &AdamState,
    theta: &[f64],
    grad: &[f64],
    lr: f64,
) -> Result<(AdamState, Vec<f64>)> {
    let mut next = state.clone();
    let mut theta = theta.to_vec();
    adam_step_in_place(&mut next, &mut theta, grad, lr)?;
    Ok((next, theta))
}

fn adam_step_in_place(state: &mut AdamState, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if theta.len() != grad.len() || state.m.len() != theta.len() || state.v.len() != theta.len() {
        return Err(Error::Shape(format!(
            "ADAM lengths differ: theta {}, grad {}, moments {}/{}",
            theta.len(),
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for k in 0..theta.len() {
        let g = grad[k];
        state.m[k] = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * g;
        state.v[k] = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        theta[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// A first-order update rule, selected by name from [`optimizer_registry`].
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;
    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()>;
}

pub struct Adam {
    state: AdamState,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            state: AdamState::new(len),
        }
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        adam_step_in_place(&mut self.state, theta, grad, lr)
    }
}

pub struct GradientDescent;

impl Optimizer for GradientDescent {
    fn name(&self) -> &'static str {
        "gd"
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if theta.len() != grad.len() {
            return Err(Error::Shape(format!(
                "theta has length {}, gradient {}",
                theta.len(),
                grad.len()
            )));
        }
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= lr * g;
        }
        Ok(())
    }
}

pub type OptimizerCtor = fn(usize) -> Box<dyn Optimizer>;

pub fn optimizer_registry() -> BTreeMap<&'static str, OptimizerCtor> {
    let mut reg: BTreeMap<&'static str, OptimizerCtor> = BTreeMap::new();
    reg.insert("adam", |n| Box::new(Adam::new(n)));
    reg.insert("gd", |_| Box::new(GradientDescent));
    reg
}

pub fn make_optimizer(name: &str, len: usize) -> Result<Box<dyn Optimizer>> {
    let reg = optimizer_registry();
    match reg.get(name) {
        Some(ctor) => Ok(ctor(len)),
        None => Err(Error::UnknownStrategy {
            kind: "optimizer",
            name: name.to_string(),
            known: reg.keys().copied().collect::<Vec<_>>().join(", "),
        }),
    }
}

fn default_optimizer() -> String {
    "adam".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default)]
    pub loss: LossKind,
    pub seed: u64,
    /// L2 coefficient; the penalty is `0.5 * weight_decay * sum(theta_k^2) / n`
    /// over decayed parameters, with `n` the batch size.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: default_optimizer(),
            learning_rate: 0.1,
            epochs: 1000,
            loss: LossKind::Mse,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be finite and >= 0".into()));
        }
        make_optimizer(&self.optimizer, 1)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTrajectory {
    /// `epochs + 1` parameter vectors; index 0 is the initialization.
    pub thetas: Vec<Vec<f64>>,
    /// Objective value at each recorded parameter vector.
    pub losses: Vec<f64>,
    pub config: TrainConfig,
}

impl ParameterTrajectory {
    /// Number of completed epochs `T` (one less than the recorded points).
    pub fn epochs(&self) -> usize {
        self.thetas.len().saturating_sub(1)
    }

    pub fn final_theta(&self) -> &[f64] {
        self.thetas.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }

    pub fn param_count(&self) -> usize {
        self.thetas.first().map_or(0, Vec::len)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let p = self.param_count();
        let mut out = String::from("epoch,loss");
        for k in 0..p {
            out.push_str(&format!(",theta_{k}"));
        }
        out.push('\n');
        for (t, (theta, loss)) in self.thetas.iter().zip(&self.losses).enumerate() {
            out.push_str(&t.to_string());
            out.push(',');
            out.push_str(&fmt_f64(*loss));
            for v in theta {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        crate::io::write_string(path, &out)
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv); `config` is
    /// restored from the sidecar by the caller.
    pub fn read_csv(path: &Path, config: TrainConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(path, "empty file"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "epoch" || cols[1] != "loss" {
            return Err(Error::format(path, "expected header epoch,loss,theta_0,..."));
        }
        let p = cols.len() - 2;
        let mut thetas = Vec::new();
        let mut losses = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals = crate::io::parse_row(path, line, p + 2)?;
            if vals[0] as usize != row {
                return Err(Error::format(path, format!("epoch column out of order at row {row}")));
            }
            losses.push(vals[1]);
            thetas.push(vals[2..].to_vec());
        }
        if thetas.is_empty() {
            return Err(Error::format(path, "no epochs recorded"));
        }
        Ok(Self {
            thetas,
            losses,
            config,
        })
    }
}

/// `||theta(n) - theta(0)|| / ||theta(0)||`.
pub fn param_deviation(traj: &ParameterTrajectory, n: usize) -> Result<f64> {
    if n >= traj.thetas.len() {
        return Err(Error::Index(format!(
            "epoch {n} beyond trajectory of {} epochs",
            traj.epochs()
        )));
    }
    let t0 = &traj.thetas[0];
    let norm0 = t0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm0 == 0.0 {
        return Err(Error::DegenerateInit);
    }
    let diff = traj.thetas[n]
        .iter()
        .zip(t0)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm0)
}

/// Objective and its gradient at `theta` over the full batch. Per-point work
/// runs in parallel; the reduction walks points in index order.
pub fn batch_objective(
    points: &[Vec<f64>],
    labels: &[f64],
    model: &dyn Differentiable,
    theta: &[f64],
    loss_kind: LossKind,
    weight_decay: f64,
) -> Result<(f64, Vec<f64>)> {
    let per_point: Vec<(f64, Vec<f64>)> = points
        .par_iter()
        .map(|x| Ok((model.predict(x, theta)?, model.gradient(x, theta)?)))
        .collect::<Result<_>>()?;
    let preds: Vec<f64> = per_point.iter().map(|(p, _)| *p).collect();
    let mut value = loss(&preds, labels, loss_kind)?;
    let dl = loss_derivative(&preds, labels, loss_kind)?;
    let mut grad = vec![0.0; theta.len()];
    for ((_, g), w) in per_point.iter().zip(&dl) {
        for (acc, gk) in grad.iter_mut().zip(g) {
            *acc += w * gk;
        }
    }
    if weight_decay > 0.0 {
        let n = points.len() as f64;
        let mut penalty = 0.0;
        for (k, (acc, t)) in grad.iter_mut().zip(theta).enumerate() {
            if model.is_decayed(k) {
                penalty += t * t;
                *acc += weight_decay * t / n;
            }
        }
        value += 0.5 * weight_decay * penalty / n;
    }
    Ok((value, grad))
}

/// Trains from `init_params(P, cfg.seed)`.
pub fn train(
    dataset: &LabeledDataset,
    model: &dyn Differentiable,
    cfg: &TrainConfig,
) -> Result<ParameterTrajectory> {
    let theta0 = init_params(model.param_count(), cfg.seed)?;
    train_from(&dataset.points, &dataset.labels, model, cfg, theta0)
}

/// Runs `cfg.epochs` full-batch updates starting at `theta0`, recording the
/// parameters and objective at every epoch including the initial one.
pub fn train_from(
    points: &[Vec<f64>],
    labels: &[f64],
    model: &dyn Differentiable,
    cfg: &TrainConfig,
    theta0: Vec<f64>,
) -> Result<ParameterTrajectory> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::Shape("training set is empty".into()));
    }
    if points.len() != labels.len() {
        return Err(Error::Shape(format!("{} points vs {} labels", points.len(), labels.len())));
    }
    if let Some(bad) = points.iter().find(|x| x.len() != model.input_dim()) {
        return Err(Error::Shape(format!(
            "point of dimension {} for a model expecting {}",
            bad.len(),
            model.input_dim()
        )));
    }
    if theta0.len() != model.param_count() {
        return Err(Error::Shape(format!(
            "initial parameters have length {}, model expects {}",
            theta0.len(),
            model.param_count()
        )));
    }
    let mut optimizer = make_optimizer(&cfg.optimizer, theta0.len())?;
    let mut traj = ParameterTrajectory {
        thetas: Vec::with_capacity(cfg.epochs + 1),
        losses: Vec::with_capacity(cfg.epochs + 1),
        config: cfg.clone(),
    };
    let mut theta = theta0;
    for epoch in 0..=cfg.epochs {
        let (value, grad) = batch_objective(points, labels, model, &theta, cfg.loss, cfg.weight_decay)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite loss or gradient".into(),
                partial: Box::new(traj),
            });
        }
        traj.thetas.push(theta.clone());
        traj.losses.push(value);
        if epoch < cfg.epochs {
            optimizer.step(&mut theta, &grad, cfg.learning_rate)?;
        }
    }
    Ok(traj)
}
