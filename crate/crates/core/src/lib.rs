//! Stochastic average gradient (SAG) and comparator methods for
//! `g(x) = (1/n) Σ f_i(x)` with ℓ2-regularized linear-model components,
//! together with executable convergence bounds and Lyapunov checks.

pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod objective;
pub mod optim;
pub mod synthetic;
pub mod theory;

#[cfg(test)]
mod testutil;

pub use data::{Dataset, Example, Preprocessor, SparseVector, Standardize};
pub use error::{Error, Result};
pub use objective::{Loss, Objective, ProblemConstants};
pub use optim::{
    run_optimizer, Checkpoint, EvalCounter, Method, OptimizerConfig, RunStats, StepRule,
};
pub use synthetic::SyntheticSpec;
