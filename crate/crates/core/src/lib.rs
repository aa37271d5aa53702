//! Quantum path kernel lab: statevector simulation, QNN training, tangent and
//! path kernels, a precomputed-kernel SVM, noisy-XOR data and classical
//! baselines.

pub mod classical;
pub mod error;
pub mod harness;
pub mod io;
pub mod optim;
pub mod pathkernel;
pub mod qnn;
pub mod rng;
pub mod simkernel;
pub mod svm;
pub mod xordata;

pub use error::{Error, Result};
