//! Classical baselines: a two-hidden-layer ReLU network trained with
//! backpropagation, a random ReLU feature kernel, and the comparison
//! experiment between them on the noisy XOR data.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_string};
use crate::optim::{train_from, Differentiable, LossKind, TrainConfig};
use crate::pathkernel::{psd_report, GramMatrix, KernelKind, PsdReport};
use crate::rng::{derive_seed, SeededRng};
use crate::svm::{accuracy, svm_predict_values, svm_train_values, SvmParams};
use crate::xordata::{generate, oracle_accuracy, split, LabeledDataset};

/// Hidden width used for a `d`-dimensional input: `ceil(sqrt(d))`.
pub fn hidden_width(d: usize) -> usize {
    let mut h = (d as f64).sqrt().ceil() as usize;
    while h * h < d {
        h += 1;
    }
    while h > 1 && (h - 1) * (h - 1) >= d {
        h -= 1;
    }
    h.max(1)
}

pub fn mlp_param_count(d: usize, h: usize) -> usize {
    d * h + h * h + h + 2 * h + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DVector<f64>,
    pub b3: f64,
}

impl MlpParams {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            w1: DMatrix::zeros(h, d),
            b1: DVector::zeros(h),
            w2: DMatrix::zeros(h, h),
            b2: DVector::zeros(h),
            w3: DVector::zeros(h),
            b3: 0.0,
        }
    }

    /// Weights drawn from N(0, 1), biases zero.
    pub fn init(d: usize, h: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut p = Self::zeros(d, h);
        for v in p.w1.iter_mut().chain(p.w2.iter_mut()).chain(p.w3.iter_mut()) {
            *v = rng.standard_normal();
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    /// Layout: W1 row-major, b1, W2 row-major, b2, W3, b3.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(mlp_param_count(self.input_dim(), self.hidden()));
        out.extend(self.w1.transpose().iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.transpose().iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.push(self.b3);
        out
    }

    pub fn from_flat(d: usize, h: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != mlp_param_count(d, h) {
            return Err(Error::Shape(format!(
                "flat vector of length {} for d={d}, h={h} (expected {})",
                flat.len(),
                mlp_param_count(d, h)
            )));
        }
        let mut at = 0;
        let mut take = |len: usize| {
            let s = &flat[at..at + len];
            at += len;
            s
        };
        Ok(Self {
            w1: DMatrix::from_row_slice(h, d, take(d * h)),
            b1: DVector::from_column_slice(take(h)),
            w2: DMatrix::from_row_slice(h, h, take(h * h)),
            b2: DVector::from_column_slice(take(h)),
            w3: DVector::from_column_slice(take(h)),
            b3: take(1)[0],
        })
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn mlp_forward(x: &[f64], p: &MlpParams) -> Result<f64> {
    if x.len() != p.input_dim() {
        return Err(Error::Shape(format!("input of length {}, network expects {}", x.len(), p.input_dim())));
    }
    let a1 = (&p.w1 * DVector::from_column_slice(x) + &p.b1).map(relu);
    let a2 = (&p.w2 * a1 + &p.b2).map(relu);
    Ok(p.w3.dot(&a2) + p.b3)
}

/// The network as a model over its flat parameter vector. Biases are not
/// subject to weight decay.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub d: usize,
    pub h: usize,
}

impl Mlp {
    pub fn new(d: usize, h: usize) -> Result<Self> {
        if d == 0 || h == 0 {
            return Err(Error::Parameter(format!("network needs d, h >= 1, got d={d}, h={h}")));
        }
        Ok(Self { d, h })
    }

    fn check(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Shape(format!("input of length {}, network expects {}", x.len(), self.d)));
        }
        if theta.len() != mlp_param_count(self.d, self.h) {
            return Err(Error::Shape(format!(
                "{} parameters, network expects {}",
                theta.len(),
                mlp_param_count(self.d, self.h)
            )));
        }
        Ok(())
    }

    /// Pre-activations of both hidden layers, for kink checks.
    pub fn preactivations(&self, x: &[f64], theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x, theta)?;
        let (z1, _, z2, _) = self.layers(x, theta);
        Ok((z1, z2))
    }

    fn layers(&self, x: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (d, h) = (self.d, self.h);
        let (w1, rest) = theta.split_at(d * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h * h);
        let b2 = &rest[..h];
        let z1: Vec<f64> = (0..h)
            .map(|r| w1[r * d..(r + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[r])
            .collect();
        let a1: Vec<f64> = z1.iter().map(|&v| relu(v)).collect();
        let z2: Vec<f64> = (0..h)
            .map(|r| w2[r * h..(r + 1) * h].iter().zip(&a1).map(|(w, v)| w * v).sum::<f64>() + b2[r])
            .collect();
        let a2: Vec<f64> = z2.iter().map(|&v| relu(v)).collect();
        (z1, a1, z2, a2)
    }
}

impl Differentiable for Mlp {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn param_count(&self) -> usize {
        mlp_param_count(self.d, self.h)
    }

    fn predict(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check(x, theta)?;
        let (_, _, _, a2) = self.layers(x, theta);
        let off = self.d * self.h + 2 * self.h + self.h * self.h;
        let w3 = &theta[off..off + self.h];
        Ok(w3.iter().zip(&a2).map(|(w, a)| w * a).sum::<f64>() + theta[off + self.h])
    }

    fn gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check(x, theta)?;
        let (d, h) = (self.d, self.h);
        let (z1, a1, z2, a2) = self.layers(x, theta);
        let w2_off = d * h + h;
        let w3_off = w2_off + h * h + h;
        let w2 = &theta[w2_off..w2_off + h * h];
        let w3 = &theta[w3_off..w3_off + h];
        let mut g = vec![0.0; theta.len()];

        // ReLU subgradient at 0 is taken as 0.
        let delta2: Vec<f64> = (0..h).map(|r| if z2[r] > 0.0 { w3[r] } else { 0.0 }).collect();
        let delta1: Vec<f64> = (0..h)
            .map(|c| {
                if z1[c] > 0.0 {
                    (0..h).map(|r| w2[r * h + c] * delta2[r]).sum()
                } else {
                    0.0
                }
            })
            .collect();
        for r in 0..h {
            for c in 0..d {
                g[r * d + c] = delta1[r] * x[c];
            }
            g[d * h + r] = delta1[r];
            for c in 0..h {
                g[w2_off + r * h + c] = delta2[r] * a1[c];
            }
            g[w2_off + h * h + r] = delta2[r];
            g[w3_off + r] = a2[r];
        }
        g[w3_off + h] = 1.0;
        Ok(g)
    }

    fn is_decayed(&self, k: usize) -> bool {
        let (d, h) = (self.d, self.h);
        let b1 = d * h..d * h + h;
        let b2 = d * h + h + h * h..d * h + 2 * h + h * h;
        !(b1.contains(&k) || b2.contains(&k) || k == mlp_param_count(d, h) - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    #[serde(default = "default_mlp_epochs")]
    pub epochs: usize,
    #[serde(default = "default_mlp_lr")]
    pub learning_rate: f64,
    /// L2 penalty on weights.
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_mlp_epochs() -> usize {
    1000
}

fn default_mlp_lr() -> f64 {
    0.001
}

/// Comparison runs use a small L2 penalty. Without it the weights on
/// all-zero input columns never receive a gradient and stay at their
/// initial values.
pub const COMPARE_WEIGHT_DECAY: f64 = 1e-4;

fn default_compare_mlp() -> MlpTrainConfig {
    MlpTrainConfig {
        weight_decay: COMPARE_WEIGHT_DECAY,
        ..Default::default()
    }
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_mlp_epochs(),
            learning_rate: default_mlp_lr(),
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpRun {
    pub initial: MlpParams,
    pub trained: MlpParams,
    pub losses: Vec<f64>,
}

/// Full-batch ADAM on the mean squared error.
pub fn mlp_train(ds: &LabeledDataset, seed: u64, cfg: &MlpTrainConfig) -> Result<MlpRun> {
    if ds.is_empty() {
        return Err(Error::Shape("training set is empty".into()));
    }
    let d = ds.dim();
    let h = hidden_width(d);
    let model = Mlp::new(d, h)?;
    let initial = MlpParams::init(d, h, seed);
    let tc = TrainConfig {
        optimizer: "adam".into(),
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        loss: LossKind::Mse,
        seed,
        weight_decay: cfg.weight_decay,
    };
    let traj = train_from(&ds.points, &ds.labels, &model, &tc, initial.to_flat())?;
    let trained = MlpParams::from_flat(d, h, traj.final_theta())?;
    Ok(MlpRun {
        initial,
        trained,
        losses: traj.losses,
    })
}

pub fn mlp_predict(p: &MlpParams, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|x| mlp_forward(x, p).map(|v| if v >= 0.0 { 1.0 } else { -1.0 }))
        .collect()
}

/// Smallest `f` with `f * d` at least the network's parameter count.
pub fn rf_feature_count(d: usize, h: usize) -> usize {
    mlp_param_count(d, h).div_ceil(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureMap {
    pub w: DMatrix<f64>,
}

impl RandomFeatureMap {
    pub fn new(d: usize, f: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut w = DMatrix::zeros(f, d);
        for v in w.iter_mut() {
            *v = rng.standard_normal();
        }
        Self { w }
    }

    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.w.ncols() {
            return Err(Error::Shape(format!("input of length {}, map expects {}", x.len(), self.w.ncols())));
        }
        Ok((&self.w * DVector::from_column_slice(x)).map(relu))
    }
}

fn feature_rows(points: &[Vec<f64>], map: &RandomFeatureMap) -> Result<DMatrix<f64>> {
    let f = map.w.nrows();
    let mut out = DMatrix::zeros(points.len(), f);
    for (i, x) in points.iter().enumerate() {
        out.row_mut(i).copy_from(&map.features(x)?.transpose());
    }
    Ok(out)
}

/// `k(x, x') = <relu(W x), relu(W x')>`.
pub fn rf_gram(rows: &[Vec<f64>], cols: &[Vec<f64>], map: &RandomFeatureMap) -> Result<GramMatrix> {
    let fr = feature_rows(rows, map)?;
    let values = if std::ptr::eq(rows, cols) {
        &fr * fr.transpose()
    } else {
        &fr * feature_rows(cols, map)?.transpose()
    };
    Ok(GramMatrix::new(values, KernelKind::Rf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Shrinkage {
    pub signal_before: f64,
    pub junk_before: f64,
    pub signal_after: f64,
    pub junk_after: f64,
    /// `(junk_after / signal_after) / (junk_before / signal_before)`; 1 when
    /// both ratios are undefined or equal.
    pub ratio_change: f64,
}

fn column_means(w1: &DMatrix<f64>, d_signal: usize) -> (f64, f64) {
    let mean = |cols: std::ops::Range<usize>| {
        let count = cols.len() * w1.nrows();
        let total: f64 = cols.flat_map(|c| w1.column(c).iter().map(|v| v.abs()).collect::<Vec<_>>()).sum();
        total / count as f64
    };
    (mean(0..d_signal), mean(d_signal..w1.ncols()))
}

pub fn w1_shrinkage(before: &MlpParams, after: &MlpParams, d_signal: usize) -> Result<W1Shrinkage> {
    if before.w1.shape() != after.w1.shape() {
        return Err(Error::Shape(format!("W1 shapes differ: {:?} vs {:?}", before.w1.shape(), after.w1.shape())));
    }
    let d = before.input_dim();
    if d_signal == 0 || d_signal >= d {
        return Err(Error::Parameter(format!("need 1 <= d' < d, got d'={d_signal}, d={d}")));
    }
    let (signal_before, junk_before) = column_means(&before.w1, d_signal);
    let (signal_after, junk_after) = column_means(&after.w1, d_signal);
    let r_before = junk_before / signal_before;
    let r_after = junk_after / signal_after;
    let ratio_change = if r_before == r_after || (r_before.is_nan() && r_after.is_nan()) {
        1.0
    } else {
        r_after / r_before
    };
    Ok(W1Shrinkage {
        signal_before,
        junk_before,
        signal_after,
        junk_after,
        ratio_change,
    })
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_string(path, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub d: usize,
    #[serde(default = "default_d_signal")]
    pub d_signal: usize,
    pub noise: Vec<f64>,
    pub repeats: usize,
    #[serde(default = "default_pool")]
    pub pool: usize,
    /// Points per input dimension.
    #[serde(default = "default_points_per_dim")]
    pub points_per_dim: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_compare_mlp")]
    pub mlp: MlpTrainConfig,
    #[serde(default)]
    pub svm: SvmParams,
}

fn default_d_signal() -> usize {
    3
}

fn default_pool() -> usize {
    10
}

fn default_points_per_dim() -> usize {
    16
}

fn default_train_fraction() -> f64 {
    0.75
}

impl CompareConfig {
    pub fn new(d: usize, noise: Vec<f64>, repeats: usize, seed: u64) -> Self {
        Self {
            d,
            d_signal: default_d_signal(),
            noise,
            repeats,
            pool: default_pool(),
            points_per_dim: default_points_per_dim(),
            train_fraction: default_train_fraction(),
            seed,
            mlp: default_compare_mlp(),
            svm: SvmParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_signal == 0 || self.d < self.d_signal {
            return Err(Error::Config(format!("need 1 <= d' <= d, got d'={}, d={}", self.d_signal, self.d)));
        }
        if self.d < 3 {
            return Err(Error::Config(format!("comparison needs d >= 3, got {}", self.d)));
        }
        if self.repeats == 0 || self.pool == 0 || self.points_per_dim == 0 {
            return Err(Error::Config("repeats, pool and points_per_dim must be >= 1".into()));
        }
        if self.noise.is_empty() || self.noise.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("noise list must be non-empty and non-negative".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        self.svm.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub d: usize,
    pub eps: f64,
    pub repeat: usize,
    pub oracle_acc: f64,
    pub nn_acc: f64,
    pub rf_acc: f64,
    /// Spectrum check of the pool's training Gram with the smallest
    /// `min_eig / max_eig`, and whether every Gram in the pool passed.
    pub rf_worst_psd: PsdReport,
    pub rf_all_mercer: bool,
}

fn nn_test_accuracy(train: &LabeledDataset, test: &LabeledDataset, seed: u64, cfg: &MlpTrainConfig) -> Result<f64> {
    let run = mlp_train(train, seed, cfg)?;
    accuracy(&mlp_predict(&run.trained, &test.points)?, &test.labels)
}

fn rf_test_accuracy(
    train: &LabeledDataset,
    test: &LabeledDataset,
    seed: u64,
    svm: &SvmParams,
) -> Result<(f64, PsdReport)> {
    let d = train.dim();
    let map = RandomFeatureMap::new(d, rf_feature_count(d, hidden_width(d)), seed);
    let k_train = rf_gram(&train.points, &train.points, &map)?;
    let k_test = rf_gram(&test.points, &train.points, &map)?;
    let psd = psd_report(&k_train)?;
    let model = svm_train_values(&k_train.values, &train.labels, svm)?;
    Ok((accuracy(&svm_predict_values(&model, &k_test.values)?, &test.labels)?, psd))
}

fn eig_ratio(r: &PsdReport) -> f64 {
    if r.max_eigenvalue > 0.0 {
        r.min_eigenvalue / r.max_eigenvalue
    } else {
        0.0
    }
}

/// Best-of-pool test accuracy of networks and random-feature SVMs for every
/// (noise, repeat) cell. Rows come back in (noise, repeat) order.
pub fn compare_experiment(cfg: &CompareConfig) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.noise.len())
        .flat_map(|e| (0..cfg.repeats).map(move |r| (e, r)))
        .collect();
    cells
        .par_iter()
        .map(|&(e, r)| {
            let eps = cfg.noise[e];
            let cell_seed = derive_seed(cfg.seed, &[cfg.d as u64, eps.to_bits(), r as u64]);
            let ds = generate(cfg.d, cfg.d_signal, eps, cfg.points_per_dim * cfg.d, derive_seed(cell_seed, &[0]))?;
            let (train, test) = split(&ds, cfg.train_fraction, derive_seed(cell_seed, &[1]))?;
            let oracle_acc = oracle_accuracy(&test, cfg.d_signal)?;
            let nn: Vec<f64> = (0..cfg.pool)
                .into_par_iter()
                .map(|k| nn_test_accuracy(&train, &test, derive_seed(cell_seed, &[2, k as u64]), &cfg.mlp))
                .collect::<Result<_>>()?;
            let rf: Vec<(f64, PsdReport)> = (0..cfg.pool)
                .into_par_iter()
                .map(|k| rf_test_accuracy(&train, &test, derive_seed(cell_seed, &[3, k as u64]), &cfg.svm))
                .collect::<Result<_>>()?;
            Ok(CompareRow {
                d: cfg.d,
                eps,
                repeat: r,
                oracle_acc,
                nn_acc: nn.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                rf_acc: rf.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
                rf_worst_psd: rf
                    .iter()
                    .map(|r| r.1)
                    .min_by(|a, b| eig_ratio(a).total_cmp(&eig_ratio(b)))
                    .expect("pool is non-empty"),
                rf_all_mercer: rf.iter().all(|r| r.1.is_mercer()),
            })
        })
        .collect()
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("d,eps,repeat,oracle_acc,nn_acc,rf_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.d,
            fmt_f64(r.eps),
            r.repeat,
            fmt_f64(r.oracle_acc),
            fmt_f64(r.nn_acc),
            fmt_f64(r.rf_acc)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub d: usize,
    pub eps: f64,
    pub oracle_mean: f64,
    pub nn_mean: f64,
    pub nn_std: f64,
    pub rf_mean: f64,
    pub rf_std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample spread per (d, noise), in first-seen order.
pub fn summarize_compare(rows: &[CompareRow]) -> Vec<CompareSummary> {
    let mut keys: Vec<(usize, u64)> = Vec::new();
    for r in rows {
        let k = (r.d, r.eps.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(d, eps_bits)| {
            let cell: Vec<&CompareRow> = rows.iter().filter(|r| r.d == d && r.eps.to_bits() == eps_bits).collect();
            let col = |f: fn(&CompareRow) -> f64| cell.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (nn_mean, nn_std) = mean_std(&col(|r| r.nn_acc));
            let (rf_mean, rf_std) = mean_std(&col(|r| r.rf_acc));
            CompareSummary {
                d,
                eps: f64::from_bits(eps_bits),
                oracle_mean: mean_std(&col(|r| r.oracle_acc)).0,
                nn_mean,
                nn_std,
                rf_mean,
                rf_std,
            }
        })
        .collect()
}
