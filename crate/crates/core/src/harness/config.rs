use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::MlpTrainConfig;
use crate::error::{Error, Result};
use crate::io::{read_json, sha256_hex};
use crate::optim::{LossKind, TrainConfig};
use crate::pathkernel::{make_strategy, Endpoint, KernelParams};
use crate::qnn::{QnnConfig, RingMode};
use crate::simkernel::MAX_QUBITS;
use crate::svm::SvmParams;
use crate::xordata::NoiseScale;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub d: usize,
    pub d_signal: usize,
    pub noise: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_split")]
    pub train_fraction: f64,
    #[serde(default)]
    pub noise_scale: NoiseScale,
}

fn default_split() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layers: Vec<usize>,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub ring: RingMode,
}

fn default_optimizer() -> String {
    "adam".into()
}

fn default_lr() -> f64 {
    0.1
}

fn default_epochs() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub endpoint: Endpoint,
    #[serde(default = "default_rel_tol")]
    pub effective_rel_tol: f64,
    #[serde(default = "yes")]
    pub include_effective: bool,
    /// Also emit the tangent kernel at the initial parameters.
    #[serde(default = "yes")]
    pub include_initial: bool,
}

fn default_rel_tol() -> f64 {
    1e-6
}

fn yes() -> bool {
    true
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            endpoint: Endpoint::Exclusive,
            effective_rel_tol: default_rel_tol(),
            include_effective: true,
            include_initial: true,
        }
    }
}

impl KernelSpec {
    /// Registry names of the kernels to build, in output order.
    pub fn kernel_names(&self) -> Vec<&'static str> {
        let mut names = vec!["qntk"];
        if self.include_initial {
            names.push("qntk_init");
        }
        names.push("qpk");
        if self.include_effective {
            names.push("eqpk");
        }
        names
    }

    pub fn params(&self) -> KernelParams {
        KernelParams {
            endpoint: self.endpoint,
            effective_rel_tol: self.effective_rel_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkageSpec {
    #[serde(default = "default_shrink_d")]
    pub d: usize,
    #[serde(default = "default_d_signal")]
    pub d_signal: usize,
    #[serde(default = "default_shrink_noise")]
    pub noise: f64,
    #[serde(default = "default_shrink_n")]
    pub n: usize,
}

fn default_shrink_d() -> usize {
    24
}

fn default_d_signal() -> usize {
    3
}

fn default_shrink_noise() -> f64 {
    0.8
}

fn default_shrink_n() -> usize {
    384
}

impl Default for ShrinkageSpec {
    fn default() -> Self {
        Self {
            d: default_shrink_d(),
            d_signal: default_d_signal(),
            noise: default_shrink_noise(),
            n: default_shrink_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub d: Vec<usize>,
    #[serde(default = "default_d_signal")]
    pub d_signal: usize,
    pub noise: Vec<f64>,
    pub repeats: usize,
    #[serde(default = "default_pool")]
    pub pool: usize,
    #[serde(default = "default_points_per_dim")]
    pub points_per_dim: usize,
    #[serde(default = "default_baseline_split")]
    pub train_fraction: f64,
    #[serde(default = "default_baseline_mlp")]
    pub mlp: MlpTrainConfig,
    #[serde(default)]
    pub shrinkage: Option<ShrinkageSpec>,
}

fn default_pool() -> usize {
    10
}

fn default_points_per_dim() -> usize {
    16
}

fn default_baseline_split() -> f64 {
    0.75
}

fn default_baseline_mlp() -> MlpTrainConfig {
    MlpTrainConfig {
        weight_decay: crate::classical::COMPARE_WEIGHT_DECAY,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub svm: SvmParams,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSpec>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        Ok(cfg)
    }

    pub fn qnn_config(&self, layers: usize) -> QnnConfig {
        QnnConfig {
            d: self.dataset.d,
            layers,
            ring: self.model.ring,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: self.model.optimizer.clone(),
            learning_rate: self.model.learning_rate,
            epochs: self.model.epochs,
            loss: self.model.loss,
            seed,
            weight_decay: 0.0,
        }
    }

    /// Replaces the seed list with a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }

    /// SHA-256 of the canonical JSON, ignoring where output goes and how
    /// many workers run.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        canon.jobs = None;
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        sha256_hex(&bytes)
    }

    /// Output directory `<out>/<hash prefix>`.
    pub fn root(&self) -> PathBuf {
        self.out.join(&self.hash()[..16])
    }

    pub fn validate(&self) -> Result<()> {
        let ds = &self.dataset;
        if ds.d == 0 || ds.d > MAX_QUBITS {
            return Err(config_err(format!("dataset.d must be in 1..={MAX_QUBITS}, got {}", ds.d)));
        }
        if ds.d_signal == 0 || ds.d_signal > ds.d {
            return Err(config_err(format!("dataset.d_signal must be in 1..={}, got {}", ds.d, ds.d_signal)));
        }
        check_noise("dataset.noise", &ds.noise)?;
        check_split("dataset", ds.n, ds.train_fraction)?;
        let m = &self.model;
        if m.layers.is_empty() || m.layers.contains(&0) {
            return Err(config_err("model.layers must be a non-empty list of positive integers"));
        }
        if has_duplicates(&m.layers) {
            return Err(config_err("model.layers contains duplicates"));
        }
        self.train_config(0).validate()?;
        if self.kernel.effective_rel_tol.is_nan() || self.kernel.effective_rel_tol < 0.0 {
            return Err(config_err("kernel.effective_rel_tol must be >= 0"));
        }
        for name in self.kernel.kernel_names() {
            make_strategy(name, &self.kernel.params())?;
        }
        self.svm.validate()?;
        if self.seeds.is_empty() {
            return Err(config_err("seeds must not be empty"));
        }
        if has_duplicates(&self.seeds) {
            return Err(config_err("seeds contains duplicates"));
        }
        if self.jobs == Some(0) {
            return Err(config_err("jobs must be >= 1"));
        }
        if let Some(b) = &self.baseline {
            b.validate()?;
        }
        Ok(())
    }
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d.is_empty() || self.d.iter().any(|&d| d < 3 || d < self.d_signal) {
            return Err(config_err("baseline.d must list dimensions >= max(3, d_signal)"));
        }
        if self.d_signal == 0 {
            return Err(config_err("baseline.d_signal must be >= 1"));
        }
        check_noise("baseline.noise", &self.noise)?;
        if self.repeats == 0 || self.pool == 0 || self.points_per_dim == 0 {
            return Err(config_err("baseline repeats, pool and points_per_dim must be >= 1"));
        }
        for &d in &self.d {
            check_split("baseline", self.points_per_dim * d, self.train_fraction)?;
        }
        if !(self.mlp.learning_rate.is_finite() && self.mlp.learning_rate >= 0.0) || self.mlp.epochs == 0 {
            return Err(config_err("baseline.mlp needs epochs >= 1 and a non-negative learning rate"));
        }
        if let Some(s) = &self.shrinkage {
            if s.d_signal == 0 || s.d_signal >= s.d || s.n == 0 || s.noise.is_nan() || s.noise < 0.0 {
                return Err(config_err("baseline.shrinkage needs 1 <= d_signal < d, n >= 1, noise >= 0"));
            }
        }
        Ok(())
    }
}

fn check_noise(field: &str, noise: &[f64]) -> Result<()> {
    if noise.is_empty() || noise.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(config_err(format!("{field} must be a non-empty list of finite values >= 0")));
    }
    let bits: Vec<u64> = noise.iter().map(|e| e.to_bits()).collect();
    if has_duplicates(&bits) {
        return Err(config_err(format!("{field} contains duplicates")));
    }
    Ok(())
}

fn check_split(section: &str, n: usize, fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(config_err(format!("{section}.train_fraction must lie in (0, 1), got {fraction}")));
    }
    let train = (n as f64 * fraction).round() as usize;
    if train == 0 || train >= n {
        return Err(config_err(format!(
            "{section}: n = {n} with train_fraction {fraction} leaves an empty partition"
        )));
    }
    Ok(())
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
                "dataset": {"d": 2, "d_signal": 2, "noise": [0.1], "n": 8},
                "model": {"layers": [1], "epochs": 3},
                "seeds": [1]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = sample();
        assert_eq!(cfg.dataset.train_fraction, 0.5);
        assert_eq!(cfg.model.optimizer, "adam");
        assert_eq!(cfg.model.learning_rate, 0.1);
        assert_eq!(cfg.svm, SvmParams::default());
        assert_eq!(cfg.kernel.kernel_names(), vec!["qntk", "qntk_init", "qpk", "eqpk"]);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = sample();
        cfg.baseline = Some(BaselineSpec {
            d: vec![4],
            d_signal: 3,
            noise: vec![0.0, 0.5],
            repeats: 2,
            pool: 3,
            points_per_dim: 16,
            train_fraction: 0.75,
            mlp: MlpTrainConfig::default(),
            shrinkage: Some(ShrinkageSpec::default()),
        });
        cfg.dataset.noise = vec![0.1, 1.0 / 3.0];
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_output_and_jobs() {
        let a = sample();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        b.jobs = Some(4);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = a.clone().with_seed(99);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let cases: Vec<fn(&mut ExperimentConfig)> = vec![
            |c| c.dataset.d_signal = 3,
            |c| c.dataset.d = 25,
            |c| c.dataset.noise = vec![],
            |c| c.dataset.noise = vec![-0.1],
            |c| c.dataset.n = 1,
            |c| c.dataset.train_fraction = 1.0,
            |c| c.model.layers = vec![],
            |c| c.model.layers = vec![0],
            |c| c.model.epochs = 0,
            |c| c.model.learning_rate = f64::NAN,
            |c| c.model.optimizer = "sgd-momentum".into(),
            |c| c.kernel.effective_rel_tol = -1.0,
            |c| c.svm.c = 0.0,
            |c| c.seeds = vec![],
            |c| c.seeds = vec![1, 1],
            |c| c.jobs = Some(0),
        ];
        for (i, mutate) in cases.iter().enumerate() {
            let mut cfg = sample();
            mutate(&mut cfg);
            let err = cfg.validate().expect_err(&format!("case {i} should fail"));
            assert!(err.is_validation(), "case {i}: {err}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"dataset": {"d": 2, "d_signal": 2, "noise": [0.1], "n": 8, "bogus": 1},
                       "model": {"layers": [1]}, "seeds": [1]}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }
}
