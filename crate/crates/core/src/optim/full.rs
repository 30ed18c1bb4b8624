use crate::objective::Objective;

use super::EvalCounter;

/// Full-gradient descent: `x ← x − α g'(x)`.
#[derive(Debug, Clone)]
pub struct FgState {
    x: Vec<f64>,
    grad: Vec<f64>,
}

impl FgState {
    pub fn new(x0: Vec<f64>) -> Self {
        let grad = vec![0.0; x0.len()];
        Self { x: x0, grad }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Gradient used by the most recent step.
    pub fn last_gradient(&self) -> &[f64] {
        &self.grad
    }

    pub fn step(&mut self, obj: &Objective, alpha: f64, counter: &mut EvalCounter) {
        obj.value_and_gradient_into(&self.x, &mut self.grad);
        counter.full_gradients += 1;
        for (xj, gj) in self.x.iter_mut().zip(&self.grad) {
            *xj -= alpha * gj;
        }
    }
}

/// Accelerated full gradient with the convex-case `t` recurrence:
/// `x⁺ = v − α g'(v)`, `t⁺ = (1 + √(1 + 4t²)) / 2`, `v⁺ = x⁺ + ((t − 1)/t⁺)(x⁺ − x)`.
#[derive(Debug, Clone)]
pub struct AfgState {
    x: Vec<f64>,
    v: Vec<f64>,
    t: f64,
    grad: Vec<f64>,
}

impl AfgState {
    pub fn new(x0: Vec<f64>) -> Self {
        let grad = vec![0.0; x0.len()];
        Self {
            v: x0.clone(),
            x: x0,
            t: 1.0,
            grad,
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn extrapolated(&self) -> &[f64] {
        &self.v
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn step(&mut self, obj: &Objective, alpha: f64, counter: &mut EvalCounter) {
        obj.value_and_gradient_into(&self.v, &mut self.grad);
        counter.full_gradients += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * self.t * self.t).sqrt());
        let beta = (self.t - 1.0) / t_next;
        for j in 0..self.x.len() {
            let x_next = self.v[j] - alpha * self.grad[j];
            self.v[j] = x_next + beta * (x_next - self.x[j]);
            self.x[j] = x_next;
        }
        self.t = t_next;
    }
}
