//! Single-step optimizer state machines and the run driver.
//!
//! Every method takes the sampled component index from its caller; only the
//! driver owns a random number generator.

mod driver;
mod full;
mod sag;
mod stochastic;

pub use driver::{run_optimizer, Checkpoint, Method, OptimizerConfig, RunStats, StepRule};
pub use full::{AfgState, FgState};
pub use sag::{
    lipschitz_backtrack, lipschitz_inequality_holds, GradientMemory, Iag, SagBasicState, SagState,
    SagStep, INITIAL_LIPSCHITZ, MAX_LIPSCHITZ,
};
pub use stochastic::{GradAvgState, MomentumState, SgOptions, SgState};

use crate::error::{Error, Result};
use crate::linalg;

/// Gradient and function evaluation counts, in the units used for
/// effective-pass accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounter {
    pub component_gradients: u64,
    pub full_gradients: u64,
    /// Extra component evaluations made by the Lipschitz line search.
    pub line_search_evals: u64,
}

impl EvalCounter {
    /// Cost in component-evaluation units; a full gradient costs `n`.
    pub fn work_units(&self, n: usize) -> u64 {
        self.component_gradients + self.line_search_evals + self.full_gradients * n as u64
    }

    pub fn effective_passes(&self, n: usize) -> f64 {
        self.work_units(n) as f64 / n as f64
    }
}

/// Step-size sequence for the stochastic methods. `k` is the 1-based step index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `1 / (mu k)`
    Pegasos {
        mu: f64,
    },
    /// `alpha0 · p^(-2/3)` where `p = ceil(k / n)` is the current effective pass.
    Power {
        alpha0: f64,
        n: usize,
    },
}

impl StepSchedule {
    pub fn step_size(&self, k: u64) -> Result<f64> {
        let k = k.max(1);
        let alpha = match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::Pegasos { mu } => {
                if mu <= 0.0 {
                    return Err(Error::NotStronglyConvex);
                }
                1.0 / (mu * k as f64)
            }
            StepSchedule::Power { alpha0, n } => {
                let pass = k.div_ceil(n.max(1) as u64) as f64;
                alpha0 * pass.powf(-2.0 / 3.0)
            }
        };
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {alpha}"
            )));
        }
        Ok(alpha)
    }
}

/// `‖x^k − x^{k−1}‖ / α`, a cheap optimality proxy for constant-step methods.
pub fn termination_metric(x: &[f64], x_prev: &[f64], alpha: f64) -> f64 {
    linalg::dist_sq(x, x_prev).sqrt() / alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::Constant(0.3).step_size(5).unwrap(), 0.3);
        assert_eq!(StepSchedule::Pegasos { mu: 0.5 }.step_size(4).unwrap(), 0.5);
        assert!(StepSchedule::Pegasos { mu: 0.0 }.step_size(1).is_err());
        let s = StepSchedule::Power { alpha0: 1.0, n: 10 };
        assert_eq!(s.step_size(1).unwrap(), 1.0);
        assert_eq!(s.step_size(10).unwrap(), 1.0);
        assert!((s.step_size(80).unwrap() - 0.25).abs() < 1e-15);
        assert!(StepSchedule::Constant(0.0).step_size(1).is_err());
    }

    #[test]
    fn termination_metric_fixed_point() {
        assert_eq!(termination_metric(&[1.0, 2.0], &[1.0, 2.0], 0.1), 0.0);
        assert_eq!(termination_metric(&[3.0, 4.0], &[0.0, 0.0], 0.5), 10.0);
    }

    #[test]
    fn work_units() {
        let c = EvalCounter {
            component_gradients: 7,
            full_gradients: 2,
            line_search_evals: 3,
        };
        assert_eq!(c.work_units(5), 20);
        assert_eq!(c.effective_passes(5), 4.0);
    }
}
