//! Quadratic Lyapunov functions over the joint SAG state `θ = (y_1..y_n, x)`.
//!
//! Every block matrix has the form `A = a_id I + a_ee eeᵀ`, `b = b_e e`,
//! `c = c_id I`, where `e` stacks `n` identity blocks. With `u_i = y_i − y*_i`
//! and `v = x − x*` the quadratic form is
//!
//! ```text
//! a_id Σ‖u_i‖² + a_ee ‖Σu_i‖² + 2 b_e (Σu_i)ᵀv + c_id ‖v‖²
//! ```
//!
//! so nothing of size `(n+1)p` is ever materialized.

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{Objective, ProblemConstants};
use crate::optim::{EvalCounter, SagBasicState};

use super::bounds::LARGE_STEP_SLACK;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `α = 1/(2nL)`, `δ = μ/(8nL)`
    SmallStep,
    /// `α = 1/(2nμ)`, `δ = 1/(8n)`, valid when `nμ/L ≥ 8`
    LargeStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSpec {
    pub variant: Variant,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub a_id: f64,
    pub a_ee: f64,
    pub b_e: f64,
    pub c_id: f64,
}

impl LyapunovSpec {
    pub const ETA: f64 = 2.0;

    pub fn new(variant: Variant, n: usize, constants: ProblemConstants) -> Result<Self> {
        match variant {
            Variant::SmallStep => Self::small_step(n, constants),
            Variant::LargeStep => Self::large_step(n, constants),
        }
    }

    pub fn small_step(n: usize, constants: ProblemConstants) -> Result<Self> {
        let ProblemConstants { lipschitz: l, mu } = constants;
        if mu <= 0.0 {
            return Err(Error::NotStronglyConvex);
        }
        let nf = n as f64;
        let alpha = 1.0 / (2.0 * nf * l);
        Ok(Self {
            variant: Variant::SmallStep,
            n,
            alpha,
            delta: mu / (8.0 * nf * l),
            a_id: 3.0 * nf * alpha * alpha,
            a_ee: alpha * alpha / nf * (1.0 / nf - 2.0),
            b_e: -alpha * (1.0 - 1.0 / nf),
            c_id: 1.0,
        })
    }

    pub fn large_step(n: usize, constants: ProblemConstants) -> Result<Self> {
        let ProblemConstants { lipschitz: l, mu } = constants;
        if mu <= 0.0 {
            return Err(Error::NotStronglyConvex);
        }
        let nf = n as f64;
        if nf < 8.0 * l / mu * (1.0 - LARGE_STEP_SLACK) {
            return Err(Error::LargeStepHypothesis {
                n,
                required: 8.0 * l / mu,
            });
        }
        let alpha = 1.0 / (2.0 * nf * mu);
        let nu = 1.0 / (2.0 * nf);
        Ok(Self {
            variant: Variant::LargeStep,
            n,
            alpha,
            delta: 1.0 / (8.0 * nf),
            a_id: Self::ETA * alpha / nf,
            a_ee: alpha / nf * (1.0 - 2.0 * nu),
            b_e: -nu,
            c_id: 0.0,
        })
    }

    /// Blocks `(s_id, s_ee)` of `S = A − (α/n)beᵀ − (α/n)ebᵀ + (α²/n²)eceᵀ`.
    pub fn s_blocks(&self) -> (f64, f64) {
        let r = self.alpha / self.n as f64;
        (
            self.a_id,
            self.a_ee - 2.0 * r * self.b_e + r * r * self.c_id,
        )
    }
}

/// Joint state: `n` gradient memories (row-major, `n × p`) and the iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    n: usize,
    y: Vec<f64>,
    x: Vec<f64>,
}

impl Theta {
    pub fn new(n: usize, y: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if n == 0 || y.len() != n * x.len() {
            return Err(Error::DimensionMismatch {
                expected: n * x.len(),
                got: y.len(),
            });
        }
        Ok(Self { n, y, x })
    }

    pub fn zero_memory(n: usize, x: Vec<f64>) -> Self {
        Self {
            n,
            y: vec![0.0; n * x.len()],
            x,
        }
    }

    /// `(f_1'(x)..f_n'(x), x)`
    pub fn with_gradients(obj: &Objective, x: Vec<f64>) -> Self {
        let y = all_component_gradients(obj, &x);
        Self { n: obj.n(), y, x }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.y[i * p..(i + 1) * p]
    }

    pub fn memory(&self) -> &[f64] {
        &self.y
    }

    /// `Σ_i y_i`
    pub fn memory_sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.dim()];
        for row in self.y.chunks_exact(self.dim()) {
            linalg::axpy(1.0, row, &mut s);
        }
        s
    }

    /// The state after one basic SAG step on component `i`.
    pub fn successor(&self, obj: &Objective, alpha: f64, i: usize) -> Result<Theta> {
        let mut state = SagBasicState::with_memory(self.x.clone(), self.y.clone());
        state.step(obj, alpha, i, &mut EvalCounter::default())?;
        let y = (0..self.n).flat_map(|j| state.memory(j).to_vec()).collect();
        Ok(Theta {
            n: self.n,
            y,
            x: state.x().to_vec(),
        })
    }
}

/// `θ* = (f_1'(x*)..f_n'(x*), x*)` together with `g(x*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub theta: Theta,
    pub value: f64,
}

impl Optimum {
    pub fn new(obj: &Objective, x_star: &[f64]) -> Self {
        Self {
            theta: Theta::with_gradients(obj, x_star.to_vec()),
            value: obj.value(x_star),
        }
    }
}

fn all_component_gradients(obj: &Objective, x: &[f64]) -> Vec<f64> {
    let p = x.len();
    let mut y = vec![0.0; obj.n() * p];
    for (i, row) in y.chunks_exact_mut(p).enumerate() {
        obj.component_gradient_into(i, x, row);
    }
    y
}

/// Sums needed by the block quadratic forms.
struct Displacement {
    u_sq: f64,
    u_sum: Vec<f64>,
    v: Vec<f64>,
}

fn displacement(theta: &Theta, star: &Theta) -> Displacement {
    let p = theta.dim();
    let mut u_sq = 0.0;
    let mut u_sum = vec![0.0; p];
    for (a, b) in theta.y.chunks_exact(p).zip(star.y.chunks_exact(p)) {
        for j in 0..p {
            let u = a[j] - b[j];
            u_sq += u * u;
            u_sum[j] += u;
        }
    }
    Displacement {
        u_sq,
        u_sum,
        v: linalg::sub(&theta.x, &star.x),
    }
}

/// `(θ − θ*)ᵀ [A b; bᵀ c] (θ − θ*)`
pub fn quadratic_form(spec: &LyapunovSpec, theta: &Theta, opt: &Optimum) -> f64 {
    let d = displacement(theta, &opt.theta);
    spec.a_id * d.u_sq
        + spec.a_ee * linalg::norm_sq(&d.u_sum)
        + 2.0 * spec.b_e * linalg::dot(&d.u_sum, &d.v)
        + spec.c_id * linalg::norm_sq(&d.v)
}

/// `Q(θ)`: the quadratic form, plus `2g(x + (α/n)Σy_i) − 2g(x*)` for the large step.
pub fn lyapunov_q(spec: &LyapunovSpec, theta: &Theta, opt: &Optimum, obj: &Objective) -> f64 {
    let quad = quadratic_form(spec, theta, opt);
    match spec.variant {
        Variant::SmallStep => quad,
        Variant::LargeStep => {
            let mut shifted = theta.x.clone();
            linalg::axpy(
                spec.alpha / spec.n as f64,
                &theta.memory_sum(),
                &mut shifted,
            );
            2.0 * (obj.value(&shifted) - opt.value) + quad
        }
    }
}

/// Closed-form conditional expectation of the quadratic form after one SAG
/// step from `θ`, over the uniform choice of component.
pub fn expected_next_quadratic(
    spec: &LyapunovSpec,
    theta: &Theta,
    opt: &Optimum,
    obj: &Objective,
) -> f64 {
    let n = spec.n as f64;
    let p = theta.dim();
    let (s_id, s_ee) = spec.s_blocks();
    let diag = s_id + s_ee;
    let bc = spec.b_e - spec.alpha / n * spec.c_id;

    let grads = all_component_gradients(obj, &theta.x);
    let star = &opt.theta;
    let mut u_sq = 0.0;
    let mut w_sq = 0.0;
    let mut uw = 0.0;
    let mut u_sum = vec![0.0; p];
    let mut w_sum = vec![0.0; p];
    for i in 0..theta.n {
        let (y, ys, g) = (theta.y(i), star.y(i), &grads[i * p..(i + 1) * p]);
        for j in 0..p {
            let u = y[j] - ys[j];
            let w = g[j] - ys[j];
            u_sq += u * u;
            w_sq += w * w;
            uw += u * w;
            u_sum[j] += u;
            w_sum[j] += w;
        }
    }
    let v = linalg::sub(&theta.x, &star.x);

    let t1 = (1.0 - 2.0 / n) * (s_id * u_sq + s_ee * linalg::norm_sq(&u_sum)) + diag / n * u_sq;
    let t2 = diag / n * w_sq;
    let t3 = 2.0 / n * s_ee * (linalg::dot(&u_sum, &w_sum) - uw);
    let t4 = 2.0 * (1.0 - 1.0 / n) * bc * linalg::dot(&u_sum, &v);
    let t5 = 2.0 / n * bc * linalg::dot(&w_sum, &v);
    let t6 = spec.c_id * linalg::norm_sq(&v);
    t1 + t2 + t3 + t4 + t5 + t6
}

/// `(1/n) Σ_i F(successor_i(θ))`, the exact expectation by enumeration.
pub fn enumerate_next<F>(
    spec: &LyapunovSpec,
    theta: &Theta,
    obj: &Objective,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(&Theta) -> f64,
{
    let mut total = 0.0;
    for i in 0..theta.n {
        total += f(&theta.successor(obj, spec.alpha, i)?);
    }
    Ok(total / theta.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contraction {
    /// `E[Q(θ⁺) | θ]`
    pub lhs: f64,
    /// `(1 − δ) Q(θ)`
    pub rhs: f64,
    pub holds: bool,
}

pub const CONTRACTION_TOLERANCE: f64 = 1e-10;

/// One-step contraction `E[Q(θ⁺) | θ] ≤ (1 − δ) Q(θ)`, evaluated exactly.
pub fn contraction_check(
    spec: &LyapunovSpec,
    theta: &Theta,
    opt: &Optimum,
    obj: &Objective,
) -> Result<Contraction> {
    let lhs = enumerate_next(spec, theta, obj, |t| lyapunov_q(spec, t, opt, obj))?;
    let rhs = (1.0 - spec.delta) * lyapunov_q(spec, theta, opt, obj);
    Ok(Contraction {
        lhs,
        rhs,
        holds: lhs <= rhs + CONTRACTION_TOLERANCE * (1.0 + rhs.abs()),
    })
}
