use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    compare_csv, compare_experiment, mlp_train, summarize_compare, w1_shrinkage, write_matrix_csv, CompareConfig,
    CompareRow, CompareSummary, W1Shrinkage,
};
use crate::error::{Error, Result};
use crate::io::{file_hash, fmt_f64, read_json, sha256_hex, write_json, write_string};
use crate::optim::{param_deviation, train, ParameterTrajectory, TrainConfig};
use crate::pathkernel::{build_grams, make_strategy, psd_report, GramAxis, GramMatrix, PathStrategy, PsdReport};
use crate::qnn::{Qnn, QnnConfig};
use crate::rng::derive_seed;
use crate::svm::{accuracy, svm_predict, svm_train};
use crate::xordata::{generate, generate_scaled, oracle_accuracy, split, LabeledDataset};

use super::config::ExperimentConfig;

pub const JOBS_ENV: &str = "QPK_JOBS";

/// Worker count: explicit flag, then the config, then `QPK_JOBS`, then the
/// number of available cores.
pub fn resolve_jobs(flag: Option<usize>, config: Option<usize>) -> Result<usize> {
    if let Some(j) = flag.or(config) {
        return if j == 0 { Err(Error::Config("jobs must be >= 1".into())) } else { Ok(j) };
    }
    match std::env::var(JOBS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(j) if j >= 1 => Ok(j),
            _ => Err(Error::Config(format!("{JOBS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// A validated configuration bound to its output directory.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub hash: String,
    pub root: PathBuf,
    pub jobs: usize,
}

impl RunContext {
    pub fn new(config: ExperimentConfig, jobs: Option<usize>) -> Result<Self> {
        config.validate()?;
        let jobs = resolve_jobs(jobs, config.jobs)?;
        Ok(Self {
            hash: config.hash(),
            root: config.root(),
            config,
            jobs,
        })
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.root.join(sub)
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }

    fn write_config(&self) -> Result<()> {
        write_json(&self.root.join("config.json"), &self.config)?;
        write_string(&self.root.join("config_hash.txt"), &format!("{}\n", self.hash))
    }
}

fn eps_tag(eps: f64) -> String {
    format!("{eps}")
}

/// One (noise, depth, seed) grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub eps: f64,
    pub layers: usize,
    pub seed: u64,
}

impl Cell {
    fn data_tag(&self) -> String {
        format!("eps_{}_seed_{}", eps_tag(self.eps), self.seed)
    }

    pub fn tag(&self) -> String {
        format!("eps_{}_L{}_seed_{}", eps_tag(self.eps), self.layers, self.seed)
    }

    fn init_seed(&self) -> u64 {
        derive_seed(self.seed, &[self.eps.to_bits(), 2, self.layers as u64])
    }
}

/// Cells in (noise, depth, seed) order; all outputs follow this order.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &eps in &cfg.dataset.noise {
        for &layers in &cfg.model.layers {
            for &seed in &cfg.seeds {
                out.push(Cell { eps, layers, seed });
            }
        }
    }
    out
}

fn data_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &eps in &cfg.dataset.noise {
        for &seed in &cfg.seeds {
            out.push(Cell { eps, layers: 0, seed });
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct DataMeta {
    config_hash: String,
    base_seed: u64,
    eps: f64,
    data_seed: u64,
    split_seed: u64,
    train_hash: String,
    test_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub config_hash: String,
    pub dataset_hash: String,
    pub base_seed: u64,
    pub eps: f64,
    pub layers: usize,
    pub init_seed: u64,
    pub qnn: QnnConfig,
    pub train: TrainConfig,
}

fn data_paths(ctx: &RunContext, cell: &Cell) -> (PathBuf, PathBuf, PathBuf) {
    let base = ctx.dir("data").join(cell.data_tag());
    (
        base.with_file_name(format!("{}_train.csv", cell.data_tag())),
        base.with_file_name(format!("{}_test.csv", cell.data_tag())),
        base.with_file_name(format!("{}_meta.json", cell.data_tag())),
    )
}

fn traj_paths(ctx: &RunContext, cell: &Cell) -> (PathBuf, PathBuf) {
    let dir = ctx.dir("traj");
    (dir.join(format!("{}.csv", cell.tag())), dir.join(format!("{}_meta.json", cell.tag())))
}

fn gram_paths(ctx: &RunContext, cell: &Cell, kernel: &str) -> (PathBuf, PathBuf) {
    let dir = ctx.dir("gram");
    (
        dir.join(format!("{kernel}_{}_train.csv", cell.tag())),
        dir.join(format!("{kernel}_{}_test.csv", cell.tag())),
    )
}

fn svm_path(ctx: &RunContext, cell: &Cell, kernel: &str) -> PathBuf {
    ctx.dir("svm").join(format!("{kernel}_{}.json", cell.tag()))
}

fn provenance_mismatch(what: &Path, recorded: &str, active: &str, subject: &str) -> Error {
    Error::Provenance(format!(
        "{} records {subject} {recorded}, but the active {subject} is {active}",
        what.display()
    ))
}

pub fn stage_data(ctx: &RunContext, cell: &Cell) -> Result<()> {
    let ds_cfg = &ctx.config.dataset;
    let data_seed = derive_seed(cell.seed, &[cell.eps.to_bits(), 0]);
    let split_seed = derive_seed(cell.seed, &[cell.eps.to_bits(), 1]);
    let ds = generate_scaled(ds_cfg.d, ds_cfg.d_signal, cell.eps, ds_cfg.noise_scale, ds_cfg.n, data_seed)?;
    let (train_ds, test_ds) = split(&ds, ds_cfg.train_fraction, split_seed)?;
    let (train_path, test_path, meta_path) = data_paths(ctx, cell);
    train_ds.save(&train_path)?;
    test_ds.save(&test_path)?;
    write_json(
        &meta_path,
        &DataMeta {
            config_hash: ctx.hash.clone(),
            base_seed: cell.seed,
            eps: cell.eps,
            data_seed,
            split_seed,
            train_hash: file_hash(&train_path)?,
            test_hash: file_hash(&test_path)?,
        },
    )
}

/// Loads the split for a cell, checking it was produced under the active
/// config and has not changed since. Returns `(train, test, dataset_hash)`.
pub fn load_data(ctx: &RunContext, cell: &Cell) -> Result<(LabeledDataset, LabeledDataset, String)> {
    let (train_path, test_path, meta_path) = data_paths(ctx, cell);
    let meta: DataMeta = read_json(&meta_path)?;
    if meta.config_hash != ctx.hash {
        return Err(provenance_mismatch(&meta_path, &meta.config_hash, &ctx.hash, "config hash"));
    }
    let (th, vh) = (file_hash(&train_path)?, file_hash(&test_path)?);
    if th != meta.train_hash {
        return Err(provenance_mismatch(&train_path, &meta.train_hash, &th, "dataset hash"));
    }
    if vh != meta.test_hash {
        return Err(provenance_mismatch(&test_path, &meta.test_hash, &vh, "dataset hash"));
    }
    let hash = sha256_hex(format!("{th}{vh}").as_bytes());
    Ok((LabeledDataset::load(&train_path)?, LabeledDataset::load(&test_path)?, hash))
}

pub fn stage_train(ctx: &RunContext, cell: &Cell) -> Result<()> {
    let (train_ds, _, dataset_hash) = load_data(ctx, cell)?;
    let qnn_cfg = ctx.config.qnn_config(cell.layers);
    let model = Qnn::layered(&qnn_cfg)?;
    let tc = ctx.config.train_config(cell.init_seed());
    let (csv, meta_path) = traj_paths(ctx, cell);
    let traj = match train(&train_ds, &model, &tc) {
        Ok(t) => t,
        Err(Error::Diverged { epoch, reason, partial }) => {
            partial.write_csv(&csv.with_file_name(format!("{}_partial.csv", cell.tag())))?;
            return Err(Error::Diverged { epoch, reason, partial });
        }
        Err(e) => return Err(e),
    };
    traj.write_csv(&csv)?;
    write_json(
        &meta_path,
        &TrajectoryMeta {
            config_hash: ctx.hash.clone(),
            dataset_hash,
            base_seed: cell.seed,
            eps: cell.eps,
            layers: cell.layers,
            init_seed: cell.init_seed(),
            qnn: qnn_cfg,
            train: tc,
        },
    )
}

/// Loads a trajectory after checking it was trained under the active config
/// on the dataset currently on disk. Returns the trajectory and its file hash.
pub fn load_trajectory(ctx: &RunContext, cell: &Cell, dataset_hash: &str) -> Result<(ParameterTrajectory, String)> {
    let (csv, meta_path) = traj_paths(ctx, cell);
    let meta: TrajectoryMeta = read_json(&meta_path)?;
    if meta.config_hash != ctx.hash {
        return Err(provenance_mismatch(&meta_path, &meta.config_hash, &ctx.hash, "config hash"));
    }
    if meta.dataset_hash != dataset_hash {
        return Err(provenance_mismatch(&meta_path, &meta.dataset_hash, dataset_hash, "dataset hash"));
    }
    let traj = ParameterTrajectory::read_csv(&csv, meta.train)?;
    Ok((traj, file_hash(&csv)?))
}

fn point_ids(ds: &LabeledDataset) -> Vec<String> {
    ds.ids.iter().map(|i| format!("x{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdRow {
    pub cell: Cell,
    pub kernel: String,
    pub report: PsdReport,
}

/// Builds every configured kernel for a cell in one pass over the
/// trajectory and writes the train and test-by-train blocks.
pub fn stage_kernels(ctx: &RunContext, cell: &Cell) -> Result<Vec<PsdRow>> {
    let (train_ds, test_ds, dataset_hash) = load_data(ctx, cell)?;
    let (traj, traj_hash) = load_trajectory(ctx, cell, &dataset_hash)?;
    let model = Qnn::layered(&ctx.config.qnn_config(cell.layers))?;
    let names = ctx.config.kernel.kernel_names();
    let params = ctx.config.kernel.params();
    let strategies: Vec<Box<dyn PathStrategy>> =
        names.iter().map(|n| make_strategy(n, &params)).collect::<Result<_>>()?;
    let refs: Vec<&dyn PathStrategy> = strategies.iter().map(|s| s.as_ref()).collect();

    let n_train = train_ds.len();
    let all: Vec<Vec<f64>> = train_ds.points.iter().chain(&test_ds.points).cloned().collect();
    let grams = build_grams(&refs, &model, GramAxis::new(&all), GramAxis::new(&all), &traj)?;
    let (train_ids, test_ids) = (point_ids(&train_ds), point_ids(&test_ds));
    let mut rows = Vec::new();
    for (name, g) in names.iter().zip(grams) {
        let mut provenance = g.provenance.clone();
        provenance.config_hash = Some(ctx.hash.clone());
        provenance.trajectory_hash = Some(traj_hash.clone());
        provenance.seed = Some(cell.init_seed());
        let block = |r0: usize, nr: usize, row_ids: &[String]| GramMatrix {
            values: g.values.view((r0, 0), (nr, n_train)).into_owned(),
            row_ids: row_ids.to_vec(),
            col_ids: train_ids.clone(),
            kind: g.kind,
            provenance: provenance.clone(),
        };
        let train_gram = block(0, n_train, &train_ids);
        let test_gram = block(n_train, test_ds.len(), &test_ids);
        let (train_path, test_path) = gram_paths(ctx, cell, name);
        train_gram.save(&train_path)?;
        test_gram.save(&test_path)?;
        rows.push(PsdRow {
            cell: *cell,
            kernel: name.to_string(),
            report: psd_report(&train_gram)?,
        });
    }
    Ok(rows)
}

fn load_gram(ctx: &RunContext, path: &Path, traj_hash: &str) -> Result<GramMatrix> {
    let g = GramMatrix::load(path)?;
    let recorded = g.provenance.config_hash.as_deref().unwrap_or("<none>");
    if recorded != ctx.hash {
        return Err(provenance_mismatch(path, recorded, &ctx.hash, "config hash"));
    }
    let recorded = g.provenance.trajectory_hash.as_deref().unwrap_or("<none>");
    if recorded != traj_hash {
        return Err(provenance_mismatch(path, recorded, traj_hash, "trajectory hash"));
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub eps: f64,
    pub layers: usize,
    pub seed: u64,
    pub kernel: String,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Empty for the oracle row.
    pub final_loss: Option<f64>,
    pub param_deviation: Option<f64>,
}

pub const METRICS_HEADER: &str = "eps,L,seed,kernel,train_acc,test_acc,final_loss,param_deviation";

/// Trains one SVM per kernel and scores it; the last row is the oracle.
pub fn stage_svm(ctx: &RunContext, cell: &Cell) -> Result<Vec<MetricRow>> {
    let (train_ds, test_ds, dataset_hash) = load_data(ctx, cell)?;
    let (traj, traj_hash) = load_trajectory(ctx, cell, &dataset_hash)?;
    let final_loss = traj.final_loss();
    let deviation = param_deviation(&traj, traj.epochs())?;
    let mut rows = Vec::new();
    for name in ctx.config.kernel.kernel_names() {
        let (train_path, test_path) = gram_paths(ctx, cell, name);
        let k_train = load_gram(ctx, &train_path, &traj_hash)?;
        let k_test = load_gram(ctx, &test_path, &traj_hash)?;
        let mut model = svm_train(&k_train, &train_ds.labels, &ctx.config.svm)?;
        model.kernel_hash = Some(file_hash(&train_path)?);
        model.save(&svm_path(ctx, cell, name))?;
        rows.push(MetricRow {
            eps: cell.eps,
            layers: cell.layers,
            seed: cell.seed,
            kernel: name.to_string(),
            train_acc: accuracy(&svm_predict(&model, &k_train)?, &train_ds.labels)?,
            test_acc: accuracy(&svm_predict(&model, &k_test)?, &test_ds.labels)?,
            final_loss: Some(final_loss),
            param_deviation: Some(deviation),
        });
    }
    let d_signal = ctx.config.dataset.d_signal;
    rows.push(MetricRow {
        eps: cell.eps,
        layers: cell.layers,
        seed: cell.seed,
        kernel: "oracle".into(),
        train_acc: oracle_accuracy(&train_ds, d_signal)?,
        test_acc: oracle_accuracy(&test_ds, d_signal)?,
        final_loss: None,
        param_deviation: None,
    });
    Ok(rows)
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.eps),
            r.layers,
            r.seed,
            r.kernel,
            fmt_f64(r.train_acc),
            fmt_f64(r.test_acc),
            opt(r.final_loss),
            opt(r.param_deviation)
        ));
    }
    out
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = crate::io::read_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::format(path, "unexpected metrics header"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::format(path, format!("bad number '{s}': {e}")));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::format(path, format!("expected 8 fields, found {}", f.len())));
            }
            Ok(MetricRow {
                eps: num(f[0])?,
                layers: f[1].parse().map_err(|_| Error::format(path, format!("bad L '{}'", f[1])))?,
                seed: f[2].parse().map_err(|_| Error::format(path, format!("bad seed '{}'", f[2])))?,
                kernel: f[3].to_string(),
                train_acc: num(f[4])?,
                test_acc: num(f[5])?,
                final_loss: opt(f[6])?,
                param_deviation: opt(f[7])?,
            })
        })
        .collect()
}

pub fn psd_csv(rows: &[PsdRow]) -> String {
    let mut out = String::from("eps,L,seed,kernel,min_eig,max_eig,symmetric_defect,mercer\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.cell.eps),
            r.cell.layers,
            r.cell.seed,
            r.kernel,
            fmt_f64(r.report.min_eigenvalue),
            fmt_f64(r.report.max_eigenvalue),
            fmt_f64(r.report.symmetric_defect),
            r.report.is_mercer()
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub cell: Cell,
    pub stage: &'static str,
    pub error: String,
    pub validation: bool,
}

fn failures_csv(failures: &[CellFailure]) -> String {
    let mut out = String::from("eps,L,seed,stage,validation,error\n");
    for f in failures {
        out.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            fmt_f64(f.cell.eps),
            f.cell.layers,
            f.cell.seed,
            f.stage,
            f.validation,
            f.error.replace('"', "\"\"")
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    Train,
    Kernels,
    Svm,
    /// Every stage for each cell, then the report.
    All,
}

#[derive(Debug, Default)]
pub struct RunArtifacts {
    pub root: PathBuf,
    pub config_hash: String,
    pub metrics: Vec<MetricRow>,
    pub psd: Vec<PsdRow>,
    pub failures: Vec<CellFailure>,
}

impl RunArtifacts {
    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }
}

enum CellOutput {
    Done,
    Psd(Vec<PsdRow>),
    Metrics(Vec<MetricRow>),
    Full(Vec<PsdRow>, Vec<MetricRow>),
}

fn run_cell(ctx: &RunContext, stage: Stage, cell: &Cell) -> std::result::Result<CellOutput, (&'static str, Error)> {
    let tagged = |name: &'static str| move |e: Error| (name, e);
    match stage {
        Stage::Data => stage_data(ctx, cell).map(|_| CellOutput::Done).map_err(tagged("data")),
        Stage::Train => stage_train(ctx, cell).map(|_| CellOutput::Done).map_err(tagged("train")),
        Stage::Kernels => stage_kernels(ctx, cell).map(CellOutput::Psd).map_err(tagged("kernels")),
        Stage::Svm => stage_svm(ctx, cell).map(CellOutput::Metrics).map_err(tagged("svm")),
        Stage::All => {
            stage_train(ctx, cell).map_err(tagged("train"))?;
            let psd = stage_kernels(ctx, cell).map_err(tagged("kernels"))?;
            let metrics = stage_svm(ctx, cell).map_err(tagged("svm"))?;
            Ok(CellOutput::Full(psd, metrics))
        }
    }
}

/// Runs one stage over every cell. Cells fail independently; their errors
/// land in `failures.csv` and in the returned artifacts.
pub fn run_stage(ctx: &RunContext, stage: Stage) -> Result<RunArtifacts> {
    ctx.write_config()?;
    let mut art = RunArtifacts {
        root: ctx.root.clone(),
        config_hash: ctx.hash.clone(),
        ..Default::default()
    };
    let mut failed_data: Vec<Cell> = Vec::new();
    if matches!(stage, Stage::Data | Stage::All) {
        let dcells = data_cells(&ctx.config);
        let results = ctx.install(|| {
            dcells
                .par_iter()
                .map(|c| run_cell(ctx, Stage::Data, c))
                .collect::<Vec<_>>()
        })?;
        for (cell, r) in dcells.iter().zip(results) {
            if let Err((stage, e)) = r {
                failed_data.push(*cell);
                art.failures.push(CellFailure {
                    cell: *cell,
                    stage,
                    validation: e.is_validation(),
                    error: e.to_string(),
                });
            }
        }
    }
    if stage != Stage::Data {
        let grid: Vec<Cell> = cells(&ctx.config)
            .into_iter()
            .filter(|c| !failed_data.iter().any(|f| f.eps.to_bits() == c.eps.to_bits() && f.seed == c.seed))
            .collect();
        let results = ctx.install(|| grid.par_iter().map(|c| run_cell(ctx, stage, c)).collect::<Vec<_>>())?;
        for (cell, r) in grid.iter().zip(results) {
            match r {
                Ok(CellOutput::Done) => {}
                Ok(CellOutput::Psd(p)) => art.psd.extend(p),
                Ok(CellOutput::Metrics(m)) => art.metrics.extend(m),
                Ok(CellOutput::Full(p, m)) => {
                    art.psd.extend(p);
                    art.metrics.extend(m);
                }
                Err((stage, e)) => art.failures.push(CellFailure {
                    cell: *cell,
                    stage,
                    validation: e.is_validation(),
                    error: e.to_string(),
                }),
            }
        }
    }
    if matches!(stage, Stage::Kernels | Stage::All) {
        write_string(&ctx.root.join("psd.csv"), &psd_csv(&art.psd))?;
    }
    if matches!(stage, Stage::Svm | Stage::All) {
        write_string(&ctx.metrics_path(), &metrics_csv(&art.metrics))?;
    }
    write_string(&ctx.root.join("failures.csv"), &failures_csv(&art.failures))?;
    if stage == Stage::All && !art.metrics.is_empty() {
        super::report::report(ctx)?;
    }
    Ok(art)
}

/// The full pipeline: data, training, kernels, SVMs, metrics and report.
pub fn run_experiment(ctx: &RunContext) -> Result<RunArtifacts> {
    run_stage(ctx, Stage::All)
}

#[derive(Debug, Clone)]
pub struct BaselineArtifacts {
    pub rows: Vec<CompareRow>,
    pub summary: Vec<CompareSummary>,
    pub shrinkage: Option<W1Shrinkage>,
}

/// Network versus random-feature comparison, plus the optional first-layer
/// shrinkage run. Outputs go to `report/`.
pub fn run_baseline(ctx: &RunContext) -> Result<BaselineArtifacts> {
    let bl = ctx
        .config
        .baseline
        .as_ref()
        .ok_or_else(|| Error::Config("config has no 'baseline' section".into()))?;
    ctx.write_config()?;
    let seed = ctx.config.seeds[0];
    let report = ctx.dir("report");
    let result = ctx.install(|| -> Result<BaselineArtifacts> {
        let mut rows = Vec::new();
        for &d in &bl.d {
            rows.extend(compare_experiment(&CompareConfig {
                d,
                d_signal: bl.d_signal,
                noise: bl.noise.clone(),
                repeats: bl.repeats,
                pool: bl.pool,
                points_per_dim: bl.points_per_dim,
                train_fraction: bl.train_fraction,
                seed,
                mlp: bl.mlp.clone(),
                svm: ctx.config.svm.clone(),
            })?);
        }
        let shrinkage = match &bl.shrinkage {
            Some(s) => {
                let ds = generate(s.d, s.d_signal, s.noise, s.n, derive_seed(seed, &[5, 0]))?;
                let run = mlp_train(&ds, derive_seed(seed, &[5, 1]), &bl.mlp)?;
                write_matrix_csv(&report.join("w1_before.csv"), &run.initial.w1)?;
                write_matrix_csv(&report.join("w1_after.csv"), &run.trained.w1)?;
                Some(w1_shrinkage(&run.initial, &run.trained, s.d_signal)?)
            }
            None => None,
        };
        Ok(BaselineArtifacts {
            summary: summarize_compare(&rows),
            rows,
            shrinkage,
        })
    })??;
    write_string(&report.join("baseline_compare.csv"), &compare_csv(&result.rows))?;
    let mut summary = String::from("d,eps,oracle_mean,nn_mean,nn_std,rf_mean,rf_std\n");
    for s in &result.summary {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.d,
            fmt_f64(s.eps),
            fmt_f64(s.oracle_mean),
            fmt_f64(s.nn_mean),
            fmt_f64(s.nn_std),
            fmt_f64(s.rf_mean),
            fmt_f64(s.rf_std)
        ));
    }
    write_string(&report.join("baseline_summary.csv"), &summary)?;
    let mut psd = String::from("d,eps,repeat,worst_min_eig,worst_max_eig,worst_symmetric_defect,all_mercer\n");
    for r in &result.rows {
        psd.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.d,
            fmt_f64(r.eps),
            r.repeat,
            fmt_f64(r.rf_worst_psd.min_eigenvalue),
            fmt_f64(r.rf_worst_psd.max_eigenvalue),
            fmt_f64(r.rf_worst_psd.symmetric_defect),
            r.rf_all_mercer
        ));
    }
    write_string(&report.join("baseline_psd.csv"), &psd)?;
    if let Some(s) = &result.shrinkage {
        write_json(&report.join("w1_shrinkage.json"), s)?;
    }
    Ok(result)
}
