//! Likelihood-ratio tests for high-dimensional normal data.

pub mod beta_oracle;
pub mod error;
pub mod linalg;
pub mod lrt;
pub mod rng;
pub mod simulation;
pub mod specfun;

pub use error::{Error, Result};
pub use linalg::{GroupedSample, Matrix, RegressionData, SymMatrix};
pub use lrt::{run_test, run_test_regimes, BlockPartition, Regime, Standardization, TestInput, TestKind, TestReport};
