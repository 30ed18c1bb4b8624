use crate::error::Result;
use crate::linalg;
use crate::objective::Objective;

use super::{EvalCounter, StepSchedule};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SgOptions {
    /// Project onto the ball of this radius after every step.
    pub project_radius: Option<f64>,
    /// Maintain the running mean of the iterates.
    pub average: bool,
}

/// Plain stochastic gradient, optionally projected (Pegasos) and/or averaged (ASG).
#[derive(Debug, Clone)]
pub struct SgState {
    x: Vec<f64>,
    avg: Option<Vec<f64>>,
    options: SgOptions,
    k: u64,
    grad: Vec<f64>,
}

impl SgState {
    pub fn new(x0: Vec<f64>, options: SgOptions) -> Self {
        let p = x0.len();
        Self {
            avg: options.average.then(|| vec![0.0; p]),
            x: x0,
            options,
            k: 0,
            grad: vec![0.0; p],
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Mean of the post-step iterates `x¹..x^k` (or `x⁰` before any step).
    pub fn average(&self) -> Option<&[f64]> {
        match &self.avg {
            Some(a) if self.k > 0 => Some(a),
            Some(_) => Some(&self.x),
            None => None,
        }
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn step(
        &mut self,
        obj: &Objective,
        schedule: &StepSchedule,
        i: usize,
        counter: &mut EvalCounter,
    ) -> Result<()> {
        let alpha = schedule.step_size(self.k + 1)?;
        obj.component_gradient_into(i, &self.x, &mut self.grad);
        counter.component_gradients += 1;
        linalg::axpy(-alpha, &self.grad, &mut self.x);
        if let Some(radius) = self.options.project_radius {
            let norm = linalg::norm(&self.x);
            if norm > radius {
                let scale = radius / norm;
                self.x.iter_mut().for_each(|v| *v *= scale);
            }
        }
        self.k += 1;
        if let Some(avg) = &mut self.avg {
            let w = 1.0 / self.k as f64;
            for (a, xj) in avg.iter_mut().zip(&self.x) {
                *a += w * (xj - *a);
            }
        }
        Ok(())
    }
}

/// Heavy-ball stochastic gradient:
/// `x⁺ = x − α f_i'(x) + β (x − x_prev)`.
#[derive(Debug, Clone)]
pub struct MomentumState {
    x: Vec<f64>,
    x_prev: Vec<f64>,
    grad: Vec<f64>,
}

impl MomentumState {
    pub fn new(x0: Vec<f64>) -> Self {
        Self::with_previous(x0.clone(), x0)
    }

    pub fn with_previous(x: Vec<f64>, x_prev: Vec<f64>) -> Self {
        let grad = vec![0.0; x.len()];
        Self { x, x_prev, grad }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_prev(&self) -> &[f64] {
        &self.x_prev
    }

    pub fn step(
        &mut self,
        obj: &Objective,
        alpha: f64,
        beta: f64,
        i: usize,
        counter: &mut EvalCounter,
    ) {
        obj.component_gradient_into(i, &self.x, &mut self.grad);
        counter.component_gradients += 1;
        for j in 0..self.x.len() {
            let next = self.x[j] - alpha * self.grad[j] + beta * (self.x[j] - self.x_prev[j]);
            self.x_prev[j] = self.x[j];
            self.x[j] = next;
        }
    }
}

/// Averages every gradient seen so far: `S ← S + f_i'(x)`, `x ← x − (α/k) S`.
#[derive(Debug, Clone)]
pub struct GradAvgState {
    x: Vec<f64>,
    sum: Vec<f64>,
    k: u64,
    grad: Vec<f64>,
}

impl GradAvgState {
    pub fn new(x0: Vec<f64>) -> Self {
        let p = x0.len();
        Self {
            x: x0,
            sum: vec![0.0; p],
            k: 0,
            grad: vec![0.0; p],
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn gradient_sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn step(&mut self, obj: &Objective, alpha: f64, i: usize, counter: &mut EvalCounter) {
        obj.component_gradient_into(i, &self.x, &mut self.grad);
        counter.component_gradients += 1;
        self.k += 1;
        linalg::axpy(1.0, &self.grad, &mut self.sum);
        let w = alpha / self.k as f64;
        linalg::axpy(-w, &self.sum, &mut self.x);
    }
}
