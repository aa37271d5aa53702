//! The layered QNN predictor and its parameter-shift gradient.
//!
//! Circuit for `d` qubits and `L` layers, acting on |0...0>:
//!
//! 1. feature map: `Y(x_j)` on qubit `j` for every feature;
//! 2. per layer `i`: `ZZ(theta[2i])` on every ring pair `(j, j+1 mod d)`,
//!    then `X(theta[2i+1])` on every qubit;
//! 3. readout `<Z>` on qubit 0.
//!
//! Parameters are shared across the qubits of a layer, so `P = 2L`.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Differentiable;
use crate::simkernel::{PauliAxis, PauliRotation, Statevector};

/// How the ZZ ring is laid out for `d = 2`, where `(0,1)` and `(1,0)` name
/// the same pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingMode {
    /// One ZZ gate per distinct pair.
    #[default]
    Distinct,
    /// Literal ring of `d` gates, so `d = 2` applies the pair twice.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QnnConfig {
    pub d: usize,
    pub layers: usize,
    #[serde(default)]
    pub ring: RingMode,
}

impl QnnConfig {
    pub fn new(d: usize, layers: usize) -> Self {
        Self {
            d,
            layers,
            ring: RingMode::Distinct,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.layers
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > crate::simkernel::MAX_QUBITS {
            return Err(Error::Config(format!("qubit count d = {} out of range", self.d)));
        }
        if self.layers == 0 {
            return Err(Error::Config("layer count must be >= 1".into()));
        }
        Ok(())
    }

    fn ring_pairs(&self) -> Vec<(usize, usize)> {
        match (self.d, self.ring) {
            (1, _) => vec![],
            (2, RingMode::Distinct) => vec![(0, 1)],
            (d, _) => (0..d).map(|j| (j, (j + 1) % d)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleSource {
    Feature(usize),
    Param(usize),
}

#[derive(Debug, Clone)]
struct TemplateGate {
    gate: PauliRotation,
    source: AngleSource,
}

/// A fixed gate list whose angles are read from the input or the parameters.
#[derive(Debug, Clone)]
pub struct Qnn {
    n_qubits: usize,
    n_features: usize,
    n_params: usize,
    readout: usize,
    gates: Vec<TemplateGate>,
}

/// One parameter-shift term: the finite shift difference of a single gate
/// occurrence bound to parameter `param`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftTerm {
    pub param: usize,
    pub gate_index: usize,
    pub difference: f64,
}

impl Qnn {
    pub fn layered(config: &QnnConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let mut gates = Vec::with_capacity(d + config.layers * 2 * d);
        for j in 0..d {
            gates.push(TemplateGate {
                gate: PauliRotation::y(j, 0.0),
                source: AngleSource::Feature(j),
            });
        }
        let pairs = config.ring_pairs();
        for layer in 0..config.layers {
            for &(a, b) in &pairs {
                gates.push(TemplateGate {
                    gate: PauliRotation::zz(a, b, 0.0),
                    source: AngleSource::Param(2 * layer),
                });
            }
            for j in 0..d {
                gates.push(TemplateGate {
                    gate: PauliRotation::x(j, 0.0),
                    source: AngleSource::Param(2 * layer + 1),
                });
            }
        }
        Ok(Self {
            n_qubits: d,
            n_features: d,
            n_params: config.param_count(),
            readout: 0,
            gates,
        })
    }

    /// Single-qubit model `X(x)` then `X(theta)` with `<Z>` readout; its
    /// predictor is `cos(2(theta + x))`.
    pub fn single_qubit_x() -> Self {
        Self {
            n_qubits: 1,
            n_features: 1,
            n_params: 1,
            readout: 0,
            gates: vec![
                TemplateGate {
                    gate: PauliRotation::x(0, 0.0),
                    source: AngleSource::Feature(0),
                },
                TemplateGate {
                    gate: PauliRotation::x(0, 0.0),
                    source: AngleSource::Param(0),
                },
            ],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Gate occurrences bound to each parameter.
    pub fn occurrences(&self, param: usize) -> usize {
        self.gates
            .iter()
            .filter(|g| g.source == AngleSource::Param(param))
            .count()
    }

    pub fn gate_axes(&self) -> Vec<PauliAxis> {
        self.gates.iter().map(|g| g.gate.axis).collect()
    }

    fn check(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        if theta.len() != self.n_params {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, model expects {}",
                theta.len(),
                self.n_params
            )));
        }
        Ok(())
    }

    fn angle(&self, g: &TemplateGate, x: &[f64], theta: &[f64]) -> f64 {
        match g.source {
            AngleSource::Feature(j) => x[j],
            AngleSource::Param(k) => theta[k],
        }
    }

    fn run_from(&self, state: &mut Statevector, start: usize, x: &[f64], theta: &[f64]) {
        for g in &self.gates[start..] {
            state.apply_unchecked(&g.gate.with_angle(self.angle(g, x, theta)));
        }
    }

    pub fn predict(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check(x, theta)?;
        let mut state = Statevector::zero(self.n_qubits)?;
        self.run_from(&mut state, 0, x, theta);
        Ok(state.expval_z_unchecked(self.readout))
    }

    /// Per-occurrence shift differences `f(a + pi/4) - f(a - pi/4)`, exact for
    /// `exp(-i a P)` gates since every Pauli string squares to identity.
    pub fn shift_terms(&self, x: &[f64], theta: &[f64]) -> Result<Vec<ShiftTerm>> {
        self.check(x, theta)?;
        let mut prefix = Statevector::zero(self.n_qubits)?;
        let mut scratch = prefix.clone();
        let mut terms = Vec::new();
        for (idx, g) in self.gates.iter().enumerate() {
            let angle = self.angle(g, x, theta);
            if let AngleSource::Param(k) = g.source {
                let mut shifted = |delta: f64| {
                    scratch.copy_from(&prefix);
                    scratch.apply_unchecked(&g.gate.with_angle(angle + delta));
                    self.run_from(&mut scratch, idx + 1, x, theta);
                    scratch.expval_z_unchecked(self.readout)
                };
                let plus = shifted(FRAC_PI_4);
                let minus = shifted(-FRAC_PI_4);
                terms.push(ShiftTerm {
                    param: k,
                    gate_index: idx,
                    difference: plus - minus,
                });
            }
            prefix.apply_unchecked(&g.gate.with_angle(angle));
        }
        Ok(terms)
    }

    /// Exact gradient by the parameter-shift rule, summed over shared occurrences.
    pub fn gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.n_params];
        for t in self.shift_terms(x, theta)? {
            grad[t.param] += t.difference;
        }
        Ok(grad)
    }

    /// Central finite differences with step `h`, `0 < h <= 1e-3`.
    pub fn gradient_fd(&self, x: &[f64], theta: &[f64], h: f64) -> Result<Vec<f64>> {
        if !(h > 0.0 && h <= 1e-3) {
            return Err(Error::Parameter(format!("finite-difference step must be in (0, 1e-3], got {h}")));
        }
        self.check(x, theta)?;
        let mut work = theta.to_vec();
        (0..self.n_params)
            .map(|k| {
                work[k] = theta[k] + h;
                let plus = self.predict(x, &work)?;
                work[k] = theta[k] - h;
                let minus = self.predict(x, &work)?;
                work[k] = theta[k];
                Ok((plus - minus) / (2.0 * h))
            })
            .collect()
    }
}

impl Differentiable for Qnn {
    fn input_dim(&self) -> usize {
        self.n_features
    }

    fn param_count(&self) -> usize {
        self.n_params
    }

    fn predict(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        Qnn::predict(self, x, theta)
    }

    fn gradient(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Qnn::gradient(self, x, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn single_qubit_closed_form_points() {
        let m = Qnn::single_qubit_x();
        assert!((m.predict(&[0.0], &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(m.predict(&[PI / 8.0], &[PI / 8.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn single_qubit_closed_form_grid() {
        let m = Qnn::single_qubit_x();
        for i in 0..10 {
            for j in 0..10 {
                let x = -PI + 2.0 * PI * i as f64 / 9.0;
                let t = -PI + 2.0 * PI * j as f64 / 9.0;
                let f = m.predict(&[x], &[t]).unwrap();
                assert!((f - (2.0 * (t + x)).cos()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_qubit_gradient_matches_derivative() {
        let m = Qnn::single_qubit_x();
        let g = m.gradient(&[PI / 8.0], &[0.0]).unwrap();
        assert!((g[0] + SQRT_2).abs() < 1e-14);
        let fd = m.gradient_fd(&[PI / 8.0], &[0.0], 1e-5).unwrap();
        assert!((fd[0] + SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn zero_inputs_give_plus_one() {
        for d in 1..=4 {
            for layers in 1..=3 {
                let q = Qnn::layered(&QnnConfig::new(d, layers)).unwrap();
                let f = q.predict(&vec![0.0; d], &vec![0.0; 2 * layers]).unwrap();
                assert!((f - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn layout_and_parameter_count() {
        let q = Qnn::layered(&QnnConfig::new(4, 20)).unwrap();
        assert_eq!(q.n_params(), 40);
        assert_eq!(q.occurrences(0), 4);
        assert_eq!(q.occurrences(1), 4);
        let q2 = Qnn::layered(&QnnConfig::new(2, 1)).unwrap();
        assert_eq!(q2.occurrences(0), 1);
        let lit = QnnConfig {
            ring: RingMode::Literal,
            ..QnnConfig::new(2, 1)
        };
        assert_eq!(Qnn::layered(&lit).unwrap().occurrences(0), 2);
        let q1 = Qnn::layered(&QnnConfig::new(1, 2)).unwrap();
        assert_eq!(q1.occurrences(0), 0);
        // ZZ gates precede X gates within each layer.
        let axes = Qnn::layered(&QnnConfig::new(3, 1)).unwrap().gate_axes();
        assert_eq!(
            axes,
            vec![
                PauliAxis::Y,
                PauliAxis::Y,
                PauliAxis::Y,
                PauliAxis::ZZ,
                PauliAxis::ZZ,
                PauliAxis::ZZ,
                PauliAxis::X,
                PauliAxis::X,
                PauliAxis::X
            ]
        );
    }

    #[test]
    fn inert_parameters_have_zero_gradient() {
        let q = Qnn::layered(&QnnConfig::new(1, 2)).unwrap();
        let x = [0.3];
        let theta = [0.5, -0.2, 1.1, 0.7];
        let g = q.gradient(&x, &theta).unwrap();
        let fd = q.gradient_fd(&x, &theta, 1e-5).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[2], 0.0);
        assert_eq!(fd[0], 0.0);
        assert_eq!(fd[2], 0.0);
    }

    #[test]
    fn shape_and_step_errors() {
        let q = Qnn::layered(&QnnConfig::new(3, 2)).unwrap();
        assert!(matches!(q.predict(&[0.0; 2], &[0.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(q.predict(&[0.0; 3], &[0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(q.gradient(&[0.0; 4], &[0.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(q.gradient_fd(&[0.0; 3], &[0.0; 4], 0.0), Err(Error::Parameter(_))));
        assert!(matches!(q.gradient_fd(&[0.0; 3], &[0.0; 4], 1e-2), Err(Error::Parameter(_))));
        assert!(QnnConfig::new(3, 0).validate().is_err());
        assert!(QnnConfig::new(0, 1).validate().is_err());
    }

    #[test]
    fn gradient_is_deterministic() {
        let q = Qnn::layered(&QnnConfig::new(3, 3)).unwrap();
        let x = [0.1, -0.4, 0.9];
        let theta = [0.2, 0.3, -0.1, 1.0, 0.5, -0.7];
        assert_eq!(q.gradient(&x, &theta).unwrap(), q.gradient(&x, &theta).unwrap());
    }

    #[test]
    fn shift_rule_matches_finite_differences() {
        let mut rng = SeededRng::new(2024);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let d = 1 + rng.below(4);
            let layers = 1 + rng.below(4);
            let q = Qnn::layered(&QnnConfig::new(d, layers)).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 1.5)).collect();
            let theta: Vec<f64> = (0..2 * layers).map(|_| rng.standard_normal()).collect();
            let g = q.gradient(&x, &theta).unwrap();
            let fd = q.gradient_fd(&x, &theta, 1e-5).unwrap();
            for (a, b) in g.iter().zip(&fd) {
                worst = worst.max((a - b).abs());
            }
            let f = q.predict(&x, &theta).unwrap();
            assert!((-1.0..=1.0).contains(&f));
        }
        assert!(worst < 1e-6, "max deviation {worst}");
    }

    #[test]
    fn shared_parameter_sums_occurrence_shifts() {
        // Instrument each occurrence by hand: shift only that gate.
        let d = 3;
        let q = Qnn::layered(&QnnConfig::new(d, 1)).unwrap();
        let x = [0.3, -0.8, 0.5];
        let theta = [0.9, -0.4];
        let terms = q.shift_terms(&x, &theta).unwrap();
        for param in 0..2 {
            let mut manual = 0.0;
            for t in terms.iter().filter(|t| t.param == param) {
                let shifted = |delta: f64| {
                    let mut s = Statevector::zero(d).unwrap();
                    for (idx, g) in q.gates.iter().enumerate() {
                        let mut a = q.angle(g, &x, &theta);
                        if idx == t.gate_index {
                            a += delta;
                        }
                        s.apply(&g.gate.with_angle(a)).unwrap();
                    }
                    s.expval_z(0).unwrap()
                };
                let diff = shifted(FRAC_PI_4) - shifted(-FRAC_PI_4);
                assert!((diff - t.difference).abs() < 1e-14);
                manual += diff;
            }
            assert_eq!(terms.iter().filter(|t| t.param == param).count(), d);
            let g = q.gradient(&x, &theta).unwrap();
            assert!((g[param] - manual).abs() < 1e-14);
        }
    }
}
