//! Quantum-state-discrimination classifiers and the benchmark harness around them.

pub mod baselines;
pub mod bench;
pub mod classifiers;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod preprocess;
pub mod quantum;
pub mod solvers;

pub use error::{Error, Result};
