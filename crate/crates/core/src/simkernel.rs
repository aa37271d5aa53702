//! Dense statevector simulation for Pauli rotations.
//!
//! A rotation of angle `a` about Pauli string `P` is `exp(-i a P)`; there is
//! no half-angle factor. Qubit `q` is bit `q` of the little-endian basis
//! index, so qubit 0 toggles between neighbouring amplitudes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
    ZZ,
}

impl PauliAxis {
    pub fn arity(self) -> usize {
        match self {
            PauliAxis::ZZ => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliRotation {
    pub axis: PauliAxis,
    pub targets: [usize; 2],
    pub angle: f64,
}

impl PauliRotation {
    pub fn x(qubit: usize, angle: f64) -> Self {
        Self::single(PauliAxis::X, qubit, angle)
    }

    pub fn y(qubit: usize, angle: f64) -> Self {
        Self::single(PauliAxis::Y, qubit, angle)
    }

    pub fn z(qubit: usize, angle: f64) -> Self {
        Self::single(PauliAxis::Z, qubit, angle)
    }

    pub fn zz(a: usize, b: usize, angle: f64) -> Self {
        Self {
            axis: PauliAxis::ZZ,
            targets: [a, b],
            angle,
        }
    }

    fn single(axis: PauliAxis, qubit: usize, angle: f64) -> Self {
        Self {
            axis,
            targets: [qubit, qubit],
            angle,
        }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.targets[..self.axis.arity()]
    }

    pub fn with_angle(&self, angle: f64) -> Self {
        Self {
            angle,
            ..self.clone()
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        for &q in self.qubits() {
            if q >= n_qubits {
                return Err(Error::Index(format!(
                    "qubit {q} out of range for {n_qubits}-qubit state"
                )));
            }
        }
        if self.axis == PauliAxis::ZZ && self.targets[0] == self.targets[1] {
            return Err(Error::Index(format!(
                "ZZ rotation needs distinct qubits, got {} twice",
                self.targets[0]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// Prepares |0...0> on `n_qubits` qubits.
pub fn new_state(n_qubits: usize) -> Result<Statevector> {
    Statevector::zero(n_qubits)
}

/// Returns a new state with `gate` applied; the input is left untouched.
pub fn apply_rotation(state: &Statevector, gate: &PauliRotation) -> Result<Statevector> {
    let mut out = state.clone();
    out.apply(gate)?;
    Ok(out)
}

pub fn expval_z(state: &Statevector, qubit: usize) -> Result<f64> {
    state.expval_z(qubit)
}

impl Statevector {
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Capacity(format!(
                "n_qubits must lie in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Resets to |0...0> without reallocating.
    pub fn reset(&mut self) {
        self.amplitudes.fill(Complex64::new(0.0, 0.0));
        self.amplitudes[0] = Complex64::new(1.0, 0.0);
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len.trailing_zeros() as usize > MAX_QUBITS {
            return Err(Error::Capacity(format!(
                "amplitude count {len} is not 2^n with 1 <= n <= {MAX_QUBITS}"
            )));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Copies `other`'s amplitudes into `self`; both must have the same width.
    pub fn copy_from(&mut self, other: &Statevector) {
        debug_assert_eq!(self.n_qubits, other.n_qubits);
        self.amplitudes.copy_from_slice(&other.amplitudes);
    }

    /// In-place application of `gate`.
    pub fn apply(&mut self, gate: &PauliRotation) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.apply_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &PauliRotation) {
        let (s, c) = gate.angle.sin_cos();
        match gate.axis {
            PauliAxis::X => {
                // [[c, -is], [-is, c]]
                self.for_each_pair(gate.targets[0], |a0, a1| {
                    let (x0, x1) = (*a0, *a1);
                    *a0 = Complex64::new(c * x0.re + s * x1.im, c * x0.im - s * x1.re);
                    *a1 = Complex64::new(s * x0.im + c * x1.re, -s * x0.re + c * x1.im);
                });
            }
            PauliAxis::Y => {
                // [[c, -s], [s, c]]
                self.for_each_pair(gate.targets[0], |a0, a1| {
                    let (x0, x1) = (*a0, *a1);
                    *a0 = x0 * c - x1 * s;
                    *a1 = x0 * s + x1 * c;
                });
            }
            PauliAxis::Z => {
                let down = Complex64::new(c, -s);
                let up = Complex64::new(c, s);
                self.for_each_pair(gate.targets[0], |a0, a1| {
                    *a0 *= down;
                    *a1 *= up;
                });
            }
            PauliAxis::ZZ => {
                let equal = Complex64::new(c, -s);
                let differ = Complex64::new(c, s);
                let (ma, mb) = (1usize << gate.targets[0], 1usize << gate.targets[1]);
                for (k, amp) in self.amplitudes.iter_mut().enumerate() {
                    let parity = ((k & ma) != 0) ^ ((k & mb) != 0);
                    *amp *= if parity { differ } else { equal };
                }
            }
        }
    }

    fn for_each_pair(&mut self, qubit: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let stride = 1usize << qubit;
        for block in self.amplitudes.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a0, a1);
            }
        }
    }

    pub fn expval_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {qubit} out of range for {}-qubit state",
                self.n_qubits
            )));
        }
        Ok(self.expval_z_unchecked(qubit))
    }

    pub(crate) fn expval_z_unchecked(&self, qubit: usize) -> f64 {
        let mask = 1usize << qubit;
        let v: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k & mask == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum();
        v.clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &Statevector, b: &Statevector) -> f64 {
        a.amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// Reference: explicit 2x2 matrix exponential exp(-i a P) applied via a
    /// dense single-qubit matrix, independent of the pairwise kernels.
    fn dense_single(state: &Statevector, axis: PauliAxis, q: usize, a: f64) -> Statevector {
        let (s, co) = a.sin_cos();
        let m = match axis {
            PauliAxis::X => [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]],
            PauliAxis::Y => [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]],
            PauliAxis::Z => [[c(co, -s), c(0.0, 0.0)], [c(0.0, 0.0), c(co, s)]],
            PauliAxis::ZZ => unreachable!(),
        };
        let amps = state.amplitudes();
        let mut out = vec![c(0.0, 0.0); amps.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let bit = (k >> q) & 1;
            let k0 = k & !(1 << q);
            let k1 = k | (1 << q);
            *o = m[bit][0] * amps[k0] + m[bit][1] * amps[k1];
        }
        Statevector::from_amplitudes(out).unwrap()
    }

    #[test]
    fn new_state_basis() {
        let s1 = new_state(1).unwrap();
        assert_eq!(s1.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        let s2 = new_state(2).unwrap();
        assert_eq!(s2.amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(new_state(25), Err(Error::Capacity(_))));
        assert!(matches!(new_state(0), Err(Error::Capacity(_))));
    }

    #[test]
    fn y_rotation_quarter_pi() {
        let s = apply_rotation(&new_state(1).unwrap(), &PauliRotation::y(0, FRAC_PI_4)).unwrap();
        let r = FRAC_PI_4.cos();
        assert!((s.amplitudes()[0] - c(r, 0.0)).norm() < 1e-15);
        assert!((s.amplitudes()[1] - c(FRAC_PI_4.sin(), 0.0)).norm() < 1e-15);
        assert!(expval_z(&s, 0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn zz_on_basis_state_is_phase() {
        let theta = 0.37;
        let s = apply_rotation(&new_state(2).unwrap(), &PauliRotation::zz(0, 1, theta)).unwrap();
        assert!((s.amplitudes()[0] - c(theta.cos(), -theta.sin())).norm() < 1e-15);
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm() == 0.0));
        assert_eq!(expval_z(&s, 0).unwrap(), 1.0);
    }

    #[test]
    fn zz_phase_signs() {
        // |01> (qubit 0 set) has differing bits and picks up e^{+i a}.
        let mut amps = vec![c(0.0, 0.0); 4];
        amps[1] = c(1.0, 0.0);
        let s = Statevector::from_amplitudes(amps).unwrap();
        let out = apply_rotation(&s, &PauliRotation::zz(0, 1, 0.5)).unwrap();
        assert!((out.amplitudes()[1] - c(0.5f64.cos(), 0.5f64.sin())).norm() < 1e-15);
    }

    #[test]
    fn zero_angle_is_identity() {
        let mut s = new_state(3).unwrap();
        s.apply(&PauliRotation::y(0, 0.3)).unwrap();
        s.apply(&PauliRotation::x(2, 1.1)).unwrap();
        for g in [
            PauliRotation::x(1, 0.0),
            PauliRotation::y(2, 0.0),
            PauliRotation::z(0, 0.0),
            PauliRotation::zz(0, 2, 0.0),
        ] {
            assert_eq!(apply_rotation(&s, &g).unwrap(), s);
        }
    }

    #[test]
    fn bad_indices_are_rejected() {
        let s = new_state(2).unwrap();
        assert!(matches!(apply_rotation(&s, &PauliRotation::x(2, 0.1)), Err(Error::Index(_))));
        assert!(matches!(apply_rotation(&s, &PauliRotation::zz(0, 0, 0.1)), Err(Error::Index(_))));
        assert!(matches!(apply_rotation(&s, &PauliRotation::zz(0, 5, 0.1)), Err(Error::Index(_))));
        assert!(matches!(expval_z(&s, 2), Err(Error::Index(_))));
    }

    #[test]
    fn kernels_match_dense_matrices() {
        let mut s = new_state(3).unwrap();
        s.apply(&PauliRotation::y(0, 0.4)).unwrap();
        s.apply(&PauliRotation::y(1, -1.3)).unwrap();
        s.apply(&PauliRotation::x(2, 0.9)).unwrap();
        for axis in [PauliAxis::X, PauliAxis::Y, PauliAxis::Z] {
            for q in 0..3 {
                let fast = apply_rotation(&s, &PauliRotation::single(axis, q, 0.77)).unwrap();
                let slow = dense_single(&s, axis, q, 0.77);
                assert!(max_diff(&fast, &slow) < 1e-14, "{axis:?} on {q}");
            }
        }
    }

    #[test]
    fn basis_states_with_clear_bit_read_plus_one() {
        for k in 0..8usize {
            let mut amps = vec![c(0.0, 0.0); 8];
            amps[k] = c(1.0, 0.0);
            let s = Statevector::from_amplitudes(amps).unwrap();
            let expect = if k & 1 == 0 { 1.0 } else { -1.0 };
            assert_eq!(s.expval_z(0).unwrap(), expect);
        }
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = PauliRotation> {
        (0..4u8, 0..n, 1..n.max(2), -10.0..10.0f64).prop_map(move |(ax, q, off, a)| match ax {
            0 => PauliRotation::x(q, a),
            1 => PauliRotation::y(q, a),
            2 => PauliRotation::z(q, a),
            _ if n >= 2 => PauliRotation::zz(q, (q + off) % n, a),
            _ => PauliRotation::y(q, a),
        })
    }

    fn arb_circuit() -> impl Strategy<Value = (usize, Vec<PauliRotation>)> {
        (1usize..=6).prop_flat_map(|n| (Just(n), prop::collection::vec(arb_gate(n), 0..=50)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn unitarity((n, gates) in arb_circuit()) {
            let mut s = new_state(n).unwrap();
            for g in &gates {
                s.apply(g).unwrap();
            }
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            let z = s.expval_z(0).unwrap();
            prop_assert!((-1.0..=1.0).contains(&z));
        }
    }

    proptest! {
        #[test]
        fn composition_and_inverse(
            (n, prefix) in arb_circuit(),
            gate_seed in 0usize..1000,
            a in -5.0..5.0f64,
            b in -5.0..5.0f64,
        ) {
            let mut s = new_state(n).unwrap();
            for g in &prefix {
                s.apply(g).unwrap();
            }
            let gate = if prefix.is_empty() {
                PauliRotation::y(0, 0.0)
            } else {
                prefix[gate_seed % prefix.len()].clone()
            };
            let ab = apply_rotation(&apply_rotation(&s, &gate.with_angle(a)).unwrap(), &gate.with_angle(b)).unwrap();
            let sum = apply_rotation(&s, &gate.with_angle(a + b)).unwrap();
            prop_assert!(max_diff(&ab, &sum) < 1e-12);
            let back = apply_rotation(&apply_rotation(&s, &gate.with_angle(a)).unwrap(), &gate.with_angle(-a)).unwrap();
            prop_assert!(max_diff(&back, &s) < 1e-12);
        }
    }
}
