//! Gaussian XOR mixtures: `d'` noisy sign coordinates, zero-padded to `d`,
//! labelled by the product of the clean signs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_row, read_json, read_string, write_json, write_string};
use crate::rng::SeededRng;

/// How the noise level is turned into a Gaussian standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// The noise level is the standard deviation.
    #[default]
    StdDev,
    /// The noise level is the variance; the deviation is its square root.
    Variance,
}

impl NoiseScale {
    pub fn std_dev(self, level: f64) -> f64 {
        match self {
            NoiseScale::StdDev => level,
            NoiseScale::Variance => level.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub d: usize,
    pub d_signal: usize,
    pub noise: f64,
    #[serde(default)]
    pub noise_scale: NoiseScale,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    /// Position of each row in the originally generated dataset.
    pub ids: Vec<usize>,
    /// The noiseless signs behind each row (`d_signal` per row); empty for
    /// datasets not produced by [`generate`].
    pub clean_signs: Vec<Vec<f64>>,
    pub meta: Option<DatasetMeta>,
}

impl LabeledDataset {
    pub fn from_parts(points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Shape(format!("{} points vs {} labels", points.len(), labels.len())));
        }
        if let Some(d) = points.first().map(Vec::len) {
            if points.iter().any(|p| p.len() != d) {
                return Err(Error::Shape("points have mixed dimensionality".into()));
            }
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Input("labels must be +1 or -1".into()));
        }
        let ids = (0..points.len()).collect();
        Ok(Self {
            points,
            labels,
            ids,
            clean_signs: Vec::new(),
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            points: rows.iter().map(|&i| self.points[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
            clean_signs: if self.clean_signs.is_empty() {
                Vec::new()
            } else {
                rows.iter().map(|&i| self.clean_signs[i].clone()).collect()
            },
            meta: self.meta.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = (0..d).map(|j| format!("x_{j}")).collect::<Vec<_>>().join(",");
        out.push_str(",label\n");
        for (p, y) in self.points.iter().zip(&self.labels) {
            for v in p {
                out.push_str(&fmt_f64(*v));
                out.push(',');
            }
            out.push_str(if *y > 0.0 { "1" } else { "-1" });
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and the `<stem>.json` sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        write_string(csv_path, &self.to_csv())?;
        let sidecar = DatasetSidecar {
            meta: self.meta.clone(),
            ids: self.ids.clone(),
            clean_signs: self.clean_signs.clone(),
        };
        write_json(&csv_path.with_extension("json"), &sidecar)
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let text = read_string(csv_path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(csv_path, "empty file"))?;
        let cols = header.split(',').count();
        if cols < 2 || !header.ends_with(",label") {
            return Err(Error::format(csv_path, "expected header x_0,...,x_{d-1},label"));
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for line in lines {
            let mut row = parse_row(csv_path, line, cols)?;
            labels.push(row.pop().unwrap());
            points.push(row);
        }
        let mut ds = Self::from_parts(points, labels).map_err(|e| Error::format(csv_path, e.to_string()))?;
        let side_path = csv_path.with_extension("json");
        if side_path.exists() {
            let side: DatasetSidecar = read_json(&side_path)?;
            if side.ids.len() != ds.len() {
                return Err(Error::format(&side_path, "sidecar row count differs from CSV"));
            }
            ds.ids = side.ids;
            ds.clean_signs = side.clean_signs;
            ds.meta = side.meta;
        }
        Ok(ds)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetSidecar {
    meta: Option<DatasetMeta>,
    ids: Vec<usize>,
    clean_signs: Vec<Vec<f64>>,
}

/// Draws `n` rows; the noise level is read as a standard deviation.
pub fn generate(d: usize, d_signal: usize, noise: f64, n: usize, seed: u64) -> Result<LabeledDataset> {
    generate_scaled(d, d_signal, noise, NoiseScale::StdDev, n, seed)
}

/// Per row: `d_signal` uniform signs, then `d_signal` Gaussian offsets, both
/// from one seeded stream.
pub fn generate_scaled(
    d: usize,
    d_signal: usize,
    noise: f64,
    scale: NoiseScale,
    n: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if d_signal == 0 || d_signal > d {
        return Err(Error::Parameter(format!("need 1 <= d' <= d, got d' = {d_signal}, d = {d}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Parameter(format!("noise must be finite and >= 0, got {noise}")));
    }
    if n == 0 {
        return Err(Error::Parameter("dataset size must be >= 1".into()));
    }
    let sigma = scale.std_dev(noise);
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut clean_signs = Vec::with_capacity(n);
    for _ in 0..n {
        let signs: Vec<f64> = (0..d_signal).map(|_| rng.sign()).collect();
        let mut row = vec![0.0; d];
        for (slot, s) in row.iter_mut().zip(&signs) {
            *slot = s + sigma * rng.standard_normal();
        }
        labels.push(signs.iter().product());
        points.push(row);
        clean_signs.push(signs);
    }
    Ok(LabeledDataset {
        points,
        labels,
        ids: (0..n).collect(),
        clean_signs,
        meta: Some(DatasetMeta {
            d,
            d_signal,
            noise,
            noise_scale: scale,
            n,
            seed,
        }),
    })
}

/// Sign of the product of the first `d_signal` coordinates; zero maps to +1.
pub fn oracle_label(x: &[f64], d_signal: usize) -> Result<f64> {
    if d_signal == 0 || d_signal > x.len() {
        return Err(Error::Parameter(format!(
            "oracle needs 1 <= d' <= {}, got {d_signal}",
            x.len()
        )));
    }
    let negatives = x[..d_signal].iter().filter(|v| **v < 0.0).count();
    let has_zero = x[..d_signal].contains(&0.0);
    Ok(if has_zero || negatives % 2 == 0 { 1.0 } else { -1.0 })
}

pub fn oracle_accuracy(ds: &LabeledDataset, d_signal: usize) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Shape("oracle accuracy over an empty dataset".into()));
    }
    let mut hits = 0usize;
    for (x, y) in ds.points.iter().zip(&ds.labels) {
        if oracle_label(x, d_signal)? == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Row indices of a seeded shuffle split; `round(n * fraction)` rows train.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Parameter(format!(
            "fraction {train_fraction} of {n} rows leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn split(ds: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let idx = split_indices(ds.len(), train_fraction, seed)?;
    Ok((ds.subset(&idx.train), ds.subset(&idx.test)))
}
