//! Tangent and path kernels over a recorded parameter trajectory.
//!
//! Every trajectory kernel here is a mean of per-epoch tangent Grams
//! `K_t[i][j] = grad f(x_i; theta_t) . grad f(x'_j; theta_t)`; the strategies
//! differ only in which epochs they average. [`build_grams`] walks the union
//! of requested epochs once, so gradients are evaluated once per point and
//! epoch regardless of how many kernels are requested.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_row, read_json, read_string, write_json, write_string};
use crate::optim::{Differentiable, ParameterTrajectory};
use crate::qnn::{Qnn, QnnConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KernelKind {
    Qntk,
    Qpk,
    EffectiveQpk,
    Rf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GramProvenance {
    /// Registry name of the strategy that produced the matrix.
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    /// Epochs whose tangent Grams were averaged.
    #[serde(default)]
    pub epochs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub kind: KernelKind,
    pub provenance: GramProvenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct GramSidecar {
    kernel_kind: KernelKind,
    rows: usize,
    cols: usize,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    provenance: GramProvenance,
}

impl GramMatrix {
    pub fn new(values: DMatrix<f64>, kind: KernelKind) -> Self {
        let row_ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        let col_ids = (0..values.ncols()).map(|i| i.to_string()).collect();
        Self {
            values,
            row_ids,
            col_ids,
            kind,
            provenance: GramProvenance::default(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Square with the same points on both axes.
    pub fn is_self_gram(&self) -> bool {
        self.nrows() == self.ncols() && self.row_ids == self.col_ids
    }

    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut out = self.col_ids.join(",");
        out.push('\n');
        for i in 0..self.nrows() {
            let row: Vec<String> = (0..self.ncols()).map(|j| fmt_f64(self.values[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        write_string(csv_path, &out)?;
        write_json(
            &csv_path.with_extension("json"),
            &GramSidecar {
                kernel_kind: self.kind,
                rows: self.nrows(),
                cols: self.ncols(),
                row_ids: self.row_ids.clone(),
                col_ids: self.col_ids.clone(),
                provenance: self.provenance.clone(),
            },
        )
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let side: GramSidecar = read_json(&csv_path.with_extension("json"))?;
        let text = read_string(csv_path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(csv_path, "empty file"))?;
        let col_ids: Vec<String> = header.split(',').map(str::to_string).collect();
        if col_ids != side.col_ids {
            return Err(Error::format(csv_path, "header does not match sidecar col_ids"));
        }
        let mut data = Vec::with_capacity(side.rows * side.cols);
        let mut rows = 0;
        for line in lines {
            data.extend(parse_row(csv_path, line, side.cols)?);
            rows += 1;
        }
        if rows != side.rows {
            return Err(Error::format(csv_path, format!("expected {} rows, found {rows}", side.rows)));
        }
        Ok(Self {
            values: DMatrix::from_row_slice(side.rows, side.cols, &data),
            row_ids: side.row_ids,
            col_ids: side.col_ids,
            kind: side.kernel_kind,
            provenance: side.provenance,
        })
    }
}

/// Tangent kernel of an arbitrary differentiable predictor.
pub fn qntk_with(model: &dyn Differentiable, x: &[f64], x2: &[f64], theta: &[f64]) -> Result<f64> {
    let g1 = model.gradient(x, theta)?;
    let g2 = model.gradient(x2, theta)?;
    Ok(dot(&g1, &g2))
}

pub fn qntk(x: &[f64], x2: &[f64], theta: &[f64], config: &QnnConfig) -> Result<f64> {
    qntk_with(&Qnn::layered(config)?, x, x2, theta)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradients(model: &dyn Differentiable, points: &[Vec<f64>], theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    points.par_iter().map(|x| model.gradient(x, theta)).collect()
}

fn tangent_gram(rows: &[Vec<f64>], cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| dot(&rows[i], &cols[j]))
}

fn ids(n: usize, given: Option<&[String]>) -> Vec<String> {
    match given {
        Some(ids) => ids.to_vec(),
        None => (0..n).map(|i| i.to_string()).collect(),
    }
}

/// Points on one axis of a Gram, with optional identifiers.
#[derive(Debug, Clone, Copy)]
pub struct GramAxis<'a> {
    pub points: &'a [Vec<f64>],
    pub ids: Option<&'a [String]>,
}

impl<'a> GramAxis<'a> {
    pub fn new(points: &'a [Vec<f64>]) -> Self {
        Self { points, ids: None }
    }

    pub fn with_ids(points: &'a [Vec<f64>], ids: &'a [String]) -> Self {
        Self { points, ids: Some(ids) }
    }
}

/// Tangent Gram at a fixed parameter vector; `n + m` gradient evaluations.
pub fn qntk_gram_with(
    model: &dyn Differentiable,
    rows: GramAxis<'_>,
    cols: GramAxis<'_>,
    theta: &[f64],
) -> Result<GramMatrix> {
    let gr = gradients(model, rows.points, theta)?;
    let gc = if std::ptr::eq(rows.points, cols.points) {
        gr.clone()
    } else {
        gradients(model, cols.points, theta)?
    };
    Ok(GramMatrix {
        values: tangent_gram(&gr, &gc),
        row_ids: ids(rows.points.len(), rows.ids),
        col_ids: ids(cols.points.len(), cols.ids),
        kind: KernelKind::Qntk,
        provenance: GramProvenance {
            strategy: "qntk".into(),
            ..Default::default()
        },
    })
}

pub fn qntk_gram(rows: &[Vec<f64>], cols: &[Vec<f64>], theta: &[f64], config: &QnnConfig) -> Result<GramMatrix> {
    qntk_gram_with(&Qnn::layered(config)?, GramAxis::new(rows), GramAxis::new(cols), theta)
}

/// Which trajectory points a path mean runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// Epochs `0..T`, leaving out the final parameters.
    #[default]
    Exclusive,
    /// Epochs `0..=T`.
    Inclusive,
}

impl Endpoint {
    fn range(self, traj: &ParameterTrajectory) -> Result<std::ops::Range<usize>> {
        let t = traj.epochs();
        if t == 0 {
            return Err(Error::Provenance(format!(
                "path kernels need at least two trajectory points, got {}",
                traj.thetas.len()
            )));
        }
        Ok(match self {
            Endpoint::Exclusive => 0..t,
            Endpoint::Inclusive => 0..t + 1,
        })
    }
}

/// Chooses the epochs whose tangent Grams are averaged.
pub trait PathStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> KernelKind;
    fn select_epochs(&self, traj: &ParameterTrajectory) -> Result<Vec<usize>>;

    fn rel_tol(&self) -> Option<f64> {
        None
    }
}

/// Tangent kernel at the final (trained) parameters.
pub struct TrainedQntk;

impl PathStrategy for TrainedQntk {
    fn name(&self) -> &'static str {
        "qntk"
    }

    fn kind(&self) -> KernelKind {
        KernelKind::Qntk
    }

    fn select_epochs(&self, traj: &ParameterTrajectory) -> Result<Vec<usize>> {
        if traj.thetas.is_empty() {
            return Err(Error::Provenance("empty trajectory".into()));
        }
        Ok(vec![traj.epochs()])
    }
}

/// Tangent kernel at the initialization.
pub struct InitialQntk;

impl PathStrategy for InitialQntk {
    fn name(&self) -> &'static str {
        "qntk_init"
    }

    fn kind(&self) -> KernelKind {
        KernelKind::Qntk
    }

    fn select_epochs(&self, traj: &ParameterTrajectory) -> Result<Vec<usize>> {
        if traj.thetas.is_empty() {
            return Err(Error::Provenance("empty trajectory".into()));
        }
        Ok(vec![0])
    }
}

/// Uniform mean over the trajectory.
pub struct PathMean {
    pub endpoint: Endpoint,
}

impl PathStrategy for PathMean {
    fn name(&self) -> &'static str {
        "qpk"
    }

    fn kind(&self) -> KernelKind {
        KernelKind::Qpk
    }

    fn select_epochs(&self, traj: &ParameterTrajectory) -> Result<Vec<usize>> {
        Ok(self.endpoint.range(traj)?.collect())
    }
}

/// Path mean that skips epochs whose parameters moved less than `rel_tol`
/// (relative) since the last kept epoch. Epoch 0 is always kept.
pub struct EffectivePath {
    pub endpoint: Endpoint,
    pub rel_tol: f64,
}

impl PathStrategy for EffectivePath {
    fn name(&self) -> &'static str {
        "eqpk"
    }

    fn kind(&self) -> KernelKind {
        KernelKind::EffectiveQpk
    }

    fn rel_tol(&self) -> Option<f64> {
        Some(self.rel_tol)
    }

    fn select_epochs(&self, traj: &ParameterTrajectory) -> Result<Vec<usize>> {
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return Err(Error::Parameter(format!("rel_tol must be >= 0, got {}", self.rel_tol)));
        }
        let range = self.endpoint.range(traj)?;
        let mut kept = vec![0];
        let mut last = 0;
        for t in range.skip(1) {
            let base = &traj.thetas[last];
            let norm = base.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::EPSILON);
            let step = traj.thetas[t]
                .iter()
                .zip(base)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if step / norm >= self.rel_tol {
                kept.push(t);
                last = t;
            }
        }
        Ok(kept)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    #[serde(default)]
    pub endpoint: Endpoint,
    #[serde(default = "default_rel_tol")]
    pub effective_rel_tol: f64,
}

fn default_rel_tol() -> f64 {
    1e-6
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            endpoint: Endpoint::Exclusive,
            effective_rel_tol: default_rel_tol(),
        }
    }
}

pub type StrategyCtor = fn(&KernelParams) -> Box<dyn PathStrategy>;

pub fn kernel_registry() -> BTreeMap<&'static str, StrategyCtor> {
    let mut reg: BTreeMap<&'static str, StrategyCtor> = BTreeMap::new();
    reg.insert("qntk", |_| Box::new(TrainedQntk));
    reg.insert("qntk_init", |_| Box::new(InitialQntk));
    reg.insert("qpk", |p| Box::new(PathMean { endpoint: p.endpoint }));
    reg.insert("eqpk", |p| {
        Box::new(EffectivePath {
            endpoint: p.endpoint,
            rel_tol: p.effective_rel_tol,
        })
    });
    reg
}

pub fn make_strategy(name: &str, params: &KernelParams) -> Result<Box<dyn PathStrategy>> {
    let reg = kernel_registry();
    match reg.get(name) {
        Some(ctor) => Ok(ctor(params)),
        None => Err(Error::UnknownStrategy {
            kind: "kernel",
            name: name.to_string(),
            known: reg.keys().copied().collect::<Vec<_>>().join(", "),
        }),
    }
}

/// Builds one Gram per strategy in a single pass over the union of their
/// epochs, in ascending epoch order. Each output is the running mean
/// `M_k = M_{k-1} + (K_t - M_{k-1}) / k` over its own epochs, so a constant
/// sequence of Grams reproduces its value exactly.
pub fn build_grams(
    strategies: &[&dyn PathStrategy],
    model: &dyn Differentiable,
    rows: GramAxis<'_>,
    cols: GramAxis<'_>,
    traj: &ParameterTrajectory,
) -> Result<Vec<GramMatrix>> {
    if traj.thetas.is_empty() {
        return Err(Error::Provenance("empty trajectory".into()));
    }
    if traj.param_count() != model.param_count() {
        return Err(Error::Shape(format!(
            "trajectory has {} parameters, model expects {}",
            traj.param_count(),
            model.param_count()
        )));
    }
    let selections: Vec<BTreeSet<usize>> = strategies
        .iter()
        .map(|s| s.select_epochs(traj).map(|v| v.into_iter().collect()))
        .collect::<Result<_>>()?;
    let union: BTreeSet<usize> = selections.iter().flatten().copied().collect();
    let square = std::ptr::eq(rows.points, cols.points);
    let (n, m) = (rows.points.len(), cols.points.len());
    let mut means = vec![DMatrix::<f64>::zeros(n, m); strategies.len()];
    let mut counts = vec![0usize; strategies.len()];
    for &t in &union {
        let theta = &traj.thetas[t];
        let gr = gradients(model, rows.points, theta)?;
        let gc = if square { gr.clone() } else { gradients(model, cols.points, theta)? };
        let k_t = tangent_gram(&gr, &gc);
        for (s, sel) in selections.iter().enumerate() {
            if sel.contains(&t) {
                counts[s] += 1;
                let c = counts[s] as f64;
                let mean = &mut means[s];
                for (acc, v) in mean.iter_mut().zip(k_t.iter()) {
                    *acc += (v - *acc) / c;
                }
            }
        }
    }
    Ok(strategies
        .iter()
        .zip(means)
        .zip(selections)
        .map(|((s, values), sel)| GramMatrix {
            values,
            row_ids: ids(n, rows.ids),
            col_ids: ids(m, cols.ids),
            kind: s.kind(),
            provenance: GramProvenance {
                strategy: s.name().to_string(),
                rel_tol: s.rel_tol(),
                epochs: sel.into_iter().collect(),
                ..Default::default()
            },
        })
        .collect())
}

/// Mean tangent Gram over epochs `0..T`.
pub fn qpk_gram(
    rows: &[Vec<f64>],
    cols: &[Vec<f64>],
    traj: &ParameterTrajectory,
    config: &QnnConfig,
) -> Result<GramMatrix> {
    let model = Qnn::layered(config)?;
    let strategy = PathMean {
        endpoint: Endpoint::Exclusive,
    };
    let mut out = build_grams(&[&strategy], &model, GramAxis::new(rows), GramAxis::new(cols), traj)?;
    Ok(out.remove(0))
}

pub fn effective_qpk_gram(
    rows: &[Vec<f64>],
    cols: &[Vec<f64>],
    traj: &ParameterTrajectory,
    config: &QnnConfig,
    rel_tol: f64,
) -> Result<GramMatrix> {
    let model = Qnn::layered(config)?;
    let strategy = EffectivePath {
        endpoint: Endpoint::Exclusive,
        rel_tol,
    };
    let mut out = build_grams(&[&strategy], &model, GramAxis::new(rows), GramAxis::new(cols), traj)?;
    Ok(out.remove(0))
}

pub const MERCER_SYMMETRY_TOL: f64 = 1e-10;
pub const MERCER_RELATIVE_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub symmetric_defect: f64,
}

impl PsdReport {
    /// `symmetric_defect < 1e-10` and `min_eig >= -1e-8 * max_eig`.
    pub fn is_mercer(&self) -> bool {
        self.symmetric_defect < MERCER_SYMMETRY_TOL
            && self.min_eigenvalue >= -MERCER_RELATIVE_EIG_TOL * self.max_eigenvalue.max(0.0)
    }
}

/// Spectrum extremes of the symmetric part and the largest asymmetry.
pub fn psd_report(gram: &GramMatrix) -> Result<PsdReport> {
    psd_report_values(&gram.values)
}

pub fn psd_report_values(values: &DMatrix<f64>) -> Result<PsdReport> {
    if values.nrows() != values.ncols() {
        return Err(Error::Shape(format!(
            "PSD report needs a square matrix, got {}x{}",
            values.nrows(),
            values.ncols()
        )));
    }
    if values.is_empty() {
        return Err(Error::Shape("PSD report on an empty matrix".into()));
    }
    let t = values.transpose();
    let symmetric_defect = (values - &t).amax();
    let sym = (values + &t) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    Ok(PsdReport {
        min_eigenvalue: eig.min(),
        max_eigenvalue: eig.max(),
        symmetric_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{init_params, TrainConfig};
    use crate::rng::SeededRng;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn toy_traj(thetas: Vec<Vec<f64>>) -> ParameterTrajectory {
        let losses = vec![0.0; thetas.len()];
        ParameterTrajectory {
            thetas,
            losses,
            config: TrainConfig::default(),
        }
    }

    fn random_points(rng: &mut SeededRng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.normal(0.0, 1.0)).collect()).collect()
    }

    fn random_walk(rng: &mut SeededRng, steps: usize, p: usize) -> Vec<Vec<f64>> {
        let mut theta: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let mut out = vec![theta.clone()];
        for _ in 0..steps {
            for v in theta.iter_mut() {
                *v += 0.2 * rng.standard_normal();
            }
            out.push(theta.clone());
        }
        out
    }

    #[test]
    fn single_qubit_qntk() {
        let m = Qnn::single_qubit_x();
        let k = qntk_with(&m, &[PI / 8.0], &[PI / 8.0], &[0.0]).unwrap();
        assert!((k - 2.0).abs() < 1e-14);
        let g = qntk_gram_with(&m, GramAxis::new(&[vec![0.0], vec![PI / 8.0]]), GramAxis::new(&[vec![0.0], vec![PI / 8.0]]), &[0.0]).unwrap();
        assert!(g.values[(0, 0)].abs() < 1e-15);
        assert!(g.values[(0, 1)].abs() < 1e-15);
        assert!(g.values[(1, 0)].abs() < 1e-15);
        assert!((g.values[(1, 1)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn qntk_symmetry_and_shape_errors() {
        let cfg = QnnConfig::new(3, 2);
        let theta = init_params(4, 1).unwrap();
        let (a, b) = ([0.3, -0.2, 0.9], [1.1, 0.4, -0.6]);
        assert_eq!(qntk(&a, &b, &theta, &cfg).unwrap(), qntk(&b, &a, &theta, &cfg).unwrap());
        assert!(qntk(&a, &a, &theta, &cfg).unwrap() >= 0.0);
        assert!(matches!(qntk(&a, &[0.0, 1.0], &theta, &cfg), Err(Error::Shape(_))));
        let single = qntk_gram(&[a.to_vec()], &[a.to_vec()], &theta, &cfg).unwrap();
        assert_eq!(single.values.shape(), (1, 1));
        assert!(single.values[(0, 0)] >= 0.0);
    }

    #[test]
    fn cached_gram_matches_pairwise() {
        let cfg = QnnConfig::new(3, 2);
        let mut rng = SeededRng::new(5);
        let rows = random_points(&mut rng, 5, 3);
        let cols = random_points(&mut rng, 4, 3);
        let theta = init_params(4, 2).unwrap();
        let g = qntk_gram(&rows, &cols, &theta, &cfg).unwrap();
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                let naive = qntk(r, c, &theta, &cfg).unwrap();
                assert!((g.values[(i, j)] - naive).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn frozen_trajectory_collapses_to_qntk() {
        let cfg = QnnConfig::new(3, 2);
        let mut rng = SeededRng::new(8);
        let pts = random_points(&mut rng, 6, 3);
        let theta = init_params(4, 3).unwrap();
        let traj = toy_traj(vec![theta.clone(); 30]);
        let qpk = qpk_gram(&pts, &pts, &traj, &cfg).unwrap();
        let ntk = qntk_gram(&pts, &pts, &theta, &cfg).unwrap();
        assert!((&qpk.values - &ntk.values).amax() <= 1e-15);
        let eff = effective_qpk_gram(&pts, &pts, &traj, &cfg, 0.0).unwrap();
        assert_eq!(eff.values, qpk.values);
    }

    #[test]
    fn single_step_trajectory_uses_initial_point() {
        let cfg = QnnConfig::new(2, 1);
        let pts = vec![vec![0.1, 0.5], vec![-0.7, 0.2]];
        let traj = toy_traj(vec![vec![0.3, 0.9], vec![1.5, -2.0]]);
        let qpk = qpk_gram(&pts, &pts, &traj, &cfg).unwrap();
        let ntk0 = qntk_gram(&pts, &pts, &traj.thetas[0], &cfg).unwrap();
        assert_eq!(qpk.values, ntk0.values);
        let short = toy_traj(vec![vec![0.3, 0.9]]);
        assert!(matches!(qpk_gram(&pts, &pts, &short, &cfg), Err(Error::Provenance(_))));
        let empty = toy_traj(vec![]);
        assert!(matches!(qpk_gram(&pts, &pts, &empty, &cfg), Err(Error::Provenance(_))));
    }

    #[test]
    fn effective_kernel_drops_frozen_tail() {
        let cfg = QnnConfig::new(2, 2);
        let mut rng = SeededRng::new(13);
        let pts = random_points(&mut rng, 4, 2);
        let mut thetas = random_walk(&mut rng, 5, 4);
        let frozen = thetas[5].clone();
        thetas.extend(std::iter::repeat_n(frozen, 20));
        let traj = toy_traj(thetas);
        let eff = effective_qpk_gram(&pts, &pts, &traj, &cfg, 1e-6).unwrap();
        assert_eq!(eff.provenance.epochs, vec![0, 1, 2, 3, 4, 5]);
        let head = toy_traj(traj.thetas[..7].to_vec());
        let expect = qpk_gram(&pts, &pts, &head, &cfg).unwrap();
        assert!((&eff.values - &expect.values).amax() < 1e-14);

        let only_first = effective_qpk_gram(&pts, &pts, &traj, &cfg, f64::INFINITY).unwrap();
        let ntk0 = qntk_gram(&pts, &pts, &traj.thetas[0], &cfg).unwrap();
        assert_eq!(only_first.values, ntk0.values);
        assert!(matches!(effective_qpk_gram(&pts, &pts, &traj, &cfg, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn endpoint_modes() {
        let traj = toy_traj(vec![vec![1.0]; 4]);
        assert_eq!(PathMean { endpoint: Endpoint::Exclusive }.select_epochs(&traj).unwrap(), vec![0, 1, 2]);
        assert_eq!(PathMean { endpoint: Endpoint::Inclusive }.select_epochs(&traj).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(TrainedQntk.select_epochs(&traj).unwrap(), vec![3]);
        assert_eq!(InitialQntk.select_epochs(&traj).unwrap(), vec![0]);
    }

    #[test]
    fn registry_resolves_names() {
        let params = KernelParams::default();
        for name in ["qntk", "qntk_init", "qpk", "eqpk"] {
            assert_eq!(make_strategy(name, &params).unwrap().name(), name);
        }
        assert!(matches!(make_strategy("rbf", &params), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn shared_pass_matches_individual_builds() {
        let cfg = QnnConfig::new(3, 1);
        let model = Qnn::layered(&cfg).unwrap();
        let mut rng = SeededRng::new(21);
        let pts = random_points(&mut rng, 4, 3);
        let test = random_points(&mut rng, 3, 3);
        let traj = toy_traj(random_walk(&mut rng, 6, 2));
        let params = KernelParams::default();
        let strategies: Vec<Box<dyn PathStrategy>> =
            ["qntk", "qpk", "eqpk"].iter().map(|n| make_strategy(n, &params).unwrap()).collect();
        let refs: Vec<&dyn PathStrategy> = strategies.iter().map(|b| b.as_ref()).collect();
        let together = build_grams(&refs, &model, GramAxis::new(&test), GramAxis::new(&pts), &traj).unwrap();
        for (s, g) in refs.iter().zip(&together) {
            let alone = build_grams(&[*s], &model, GramAxis::new(&test), GramAxis::new(&pts), &traj).unwrap();
            assert_eq!(alone[0].values, g.values);
            assert_eq!(g.values.shape(), (3, 4));
        }
        let final_ntk = qntk_gram(&test, &pts, traj.final_theta(), &cfg).unwrap();
        assert_eq!(together[0].values, final_ntk.values);
    }

    #[test]
    fn psd_report_examples() {
        let id = psd_report_values(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!((id.min_eigenvalue, id.max_eigenvalue, id.symmetric_defect), (1.0, 1.0, 0.0));
        let diag = psd_report_values(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((diag.min_eigenvalue).abs() < 1e-15 && (diag.max_eigenvalue - 2.0).abs() < 1e-15);
        let rank1 = psd_report_values(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).unwrap();
        assert!(rank1.min_eigenvalue.abs() < 1e-12);
        assert!((rank1.max_eigenvalue - 5.0).abs() < 1e-12);
        assert_eq!(rank1.symmetric_defect, 0.0);
        assert!(matches!(psd_report_values(&DMatrix::zeros(2, 3)), Err(Error::Shape(_))));
        let skew = psd_report_values(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).unwrap();
        assert_eq!(skew.symmetric_defect, 0.5);
        assert!(!skew.is_mercer());
    }

    #[test]
    fn gram_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let mut g = GramMatrix::new(DMatrix::from_row_slice(2, 3, &[1.0, 0.1, -2.5, 1e-300, 3.0, 0.7]), KernelKind::Qpk);
        g.col_ids = vec!["p0".into(), "p4".into(), "p9".into()];
        g.provenance.strategy = "qpk".into();
        g.provenance.epochs = vec![0, 1, 2];
        g.save(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("p0,p4,p9\n"));
        assert_eq!(GramMatrix::load(&path).unwrap(), g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn path_grams_are_mercer_and_bounded(seed in 0u64..10_000, d in 1usize..=4, layers in 1usize..=3) {
            let cfg = QnnConfig::new(d, layers);
            let model = Qnn::layered(&cfg).unwrap();
            let mut rng = SeededRng::new(seed);
            let pts = random_points(&mut rng, 6, d);
            let traj = toy_traj(random_walk(&mut rng, 5, 2 * layers));
            let params = KernelParams::default();
            let strategies: Vec<Box<dyn PathStrategy>> =
                ["qntk", "qntk_init", "qpk", "eqpk"].iter().map(|n| make_strategy(n, &params).unwrap()).collect();
            let refs: Vec<&dyn PathStrategy> = strategies.iter().map(|b| b.as_ref()).collect();
            let grams = build_grams(&refs, &model, GramAxis::new(&pts), GramAxis::new(&pts), &traj).unwrap();
            for g in &grams {
                let r = psd_report(g).unwrap();
                prop_assert!(r.is_mercer(), "{:?}", r);
            }
            // Every QPK entry lies between the per-epoch extremes.
            let per_epoch: Vec<DMatrix<f64>> = (0..traj.epochs())
                .map(|t| qntk_gram(&pts, &pts, &traj.thetas[t], &cfg).unwrap().values)
                .collect();
            let qpk = &grams[2].values;
            for i in 0..6 {
                for j in 0..6 {
                    let lo = per_epoch.iter().map(|m| m[(i, j)]).fold(f64::INFINITY, f64::min);
                    let hi = per_epoch.iter().map(|m| m[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(qpk[(i, j)] >= lo - 1e-12 && qpk[(i, j)] <= hi + 1e-12);
                }
            }
        }
    }
}
