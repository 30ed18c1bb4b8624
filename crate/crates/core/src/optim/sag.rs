//! Stochastic average gradient iterations.
//!
//! Two memory layouts are provided:
//!
//! * [`SagBasicState`] stores the full dense component gradient `f_i'(x)` for
//!   every `i` and divides the memory sum by `n`. This is the form the
//!   convergence analysis is stated for.
//! * [`SagState`] stores only the scalar loss derivative `s_i` (the loss
//!   gradient is `s_i a_i` for a linear model), divides by the number `m` of
//!   distinct components seen so far, and applies the regularizer exactly:
//!
//!   ```text
//!   d ← d − y_i;  y_i ← l_i'(x);  d ← d + y_i;  x ← (1 − αλ) x − (α/m) d
//!   ```
//!
//!   With lazy updates enabled, coordinates outside the current example's
//!   support are not touched. Each coordinate remembers the step at which it
//!   was last brought up to date and is caught up in closed form right before
//!   it is read, using prefix products of `c_t = 1 − α_t λ` and prefix sums of
//!   `w_t / P_t` with `w_t = α_t / m_t`. Between two reads `d_j` is constant,
//!   so for a coordinate last synced at step `s`
//!
//!   ```text
//!   x_j(t) = (P_t / P_s) x_j(s) − d_j P_t (S_t − S_s)
//!   ```
//!
//!   which stays exact while `m` (and the line-searched step) changes.
//!
//! [`Iag`] wraps either layout and visits components cyclically.

use crate::error::{Error, Result};
use crate::objective::{Loss, Objective};

use super::EvalCounter;

/// Starting Lipschitz estimate for the line search.
pub const INITIAL_LIPSCHITZ: f64 = 1.0;
/// The line search gives up once its estimate exceeds this.
pub const MAX_LIPSCHITZ: f64 = 1e15;
const PRECISION_GUARD: f64 = 1e-12;

/// One aggregated-gradient update with an externally chosen component.
pub trait GradientMemory {
    fn n(&self) -> usize;
    fn aggregated_step(
        &mut self,
        obj: &Objective,
        alpha: f64,
        i: usize,
        counter: &mut EvalCounter,
    ) -> Result<()>;
    /// Current iterate, brought fully up to date.
    fn current(&mut self) -> &[f64];
}

fn check_index(obj: &Objective, i: usize) -> Result<()> {
    if i >= obj.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            n: obj.n(),
        });
    }
    Ok(())
}

/// Dense-memory SAG: `y_i ← f_i'(x)`, `x ← x − (α/n) Σ y_i`.
#[derive(Debug, Clone)]
pub struct SagBasicState {
    n: usize,
    p: usize,
    x: Vec<f64>,
    /// `n × p`, row `i` is `y_i`.
    y: Vec<f64>,
    d: Vec<f64>,
    k: u64,
    grad: Vec<f64>,
}

impl SagBasicState {
    /// Zero-initialized gradient memory.
    pub fn new(n: usize, x0: Vec<f64>) -> Self {
        let p = x0.len();
        Self {
            n,
            p,
            x: x0,
            y: vec![0.0; n * p],
            d: vec![0.0; p],
            k: 0,
            grad: vec![0.0; p],
        }
    }

    /// Starts from an explicit memory; `d` is recomputed as the sum of the rows.
    pub fn with_memory(x0: Vec<f64>, y: Vec<f64>) -> Self {
        let p = x0.len();
        assert!(
            p > 0 && y.len().is_multiple_of(p),
            "memory must be n rows of length p"
        );
        let n = y.len() / p;
        let mut d = vec![0.0; p];
        for row in y.chunks_exact(p) {
            for (dj, yj) in d.iter_mut().zip(row) {
                *dj += yj;
            }
        }
        Self {
            n,
            p,
            x: x0,
            y,
            d,
            k: 0,
            grad: vec![0.0; p],
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn memory(&self, i: usize) -> &[f64] {
        &self.y[i * self.p..(i + 1) * self.p]
    }

    pub fn memory_sum(&self) -> &[f64] {
        &self.d
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn step(
        &mut self,
        obj: &Objective,
        alpha: f64,
        i: usize,
        counter: &mut EvalCounter,
    ) -> Result<()> {
        check_index(obj, i)?;
        obj.component_gradient_into(i, &self.x, &mut self.grad);
        counter.component_gradients += 1;
        let row = &mut self.y[i * self.p..(i + 1) * self.p];
        for ((dj, yj), gj) in self.d.iter_mut().zip(row.iter_mut()).zip(&self.grad) {
            *dj = (*dj - *yj) + gj;
            *yj = *gj;
        }
        let w = alpha / self.n as f64;
        for (xj, dj) in self.x.iter_mut().zip(&self.d) {
            *xj -= w * dj;
        }
        self.k += 1;
        Ok(())
    }
}

impl GradientMemory for SagBasicState {
    fn n(&self) -> usize {
        self.n
    }

    fn aggregated_step(
        &mut self,
        obj: &Objective,
        alpha: f64,
        i: usize,
        counter: &mut EvalCounter,
    ) -> Result<()> {
        self.step(obj, alpha, i, counter)
    }

    fn current(&mut self) -> &[f64] {
        &self.x
    }
}

/// Step-size rule for [`SagState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SagStep {
    Constant(f64),
    /// `α = 1/L_k` with `L_k` found by doubling.
    LineSearch,
}

/// Per-coordinate catch-up bookkeeping for lazy updates.
#[derive(Debug, Clone)]
struct LazyLedger {
    /// History index up to which each coordinate is current.
    synced: Vec<usize>,
    /// `P_t`, relative to the last flush; `P_0 = 1`.
    prod: Vec<f64>,
    /// `S_t = Σ_{r ≤ t} w_r / P_r`; `S_0 = 0`.
    acc: Vec<f64>,
    window: usize,
}

impl LazyLedger {
    const MIN_SCALE: f64 = 1e-100;

    fn new(p: usize) -> Self {
        Self {
            synced: vec![0; p],
            prod: vec![1.0],
            acc: vec![0.0],
            window: 4 * p.max(256),
        }
    }

    #[inline]
    fn now(&self) -> usize {
        self.prod.len() - 1
    }

    #[inline]
    fn catch_up(&mut self, j: usize, x: &mut [f64], d: &[f64]) {
        let s = self.synced[j];
        let t = self.now();
        if s == t {
            return;
        }
        let pt = self.prod[t];
        x[j] = x[j] * (pt / self.prod[s]) - d[j] * (pt * (self.acc[t] - self.acc[s]));
        self.synced[j] = t;
    }

    fn record(&mut self, c: f64, w: f64) {
        let p = self.prod[self.now()] * c;
        let s = self.acc[self.now()] + w / p;
        self.prod.push(p);
        self.acc.push(s);
    }

    fn needs_flush(&self) -> bool {
        self.now() >= self.window || self.prod[self.now()] < Self::MIN_SCALE
    }

    fn flush(&mut self, x: &mut [f64], d: &[f64]) {
        for j in 0..x.len() {
            self.catch_up(j, x, d);
        }
        self.prod.clear();
        self.prod.push(1.0);
        self.acc.clear();
        self.acc.push(0.0);
        self.synced.iter_mut().for_each(|s| *s = 0);
    }
}

/// Scalar-memory SAG with `m`-counting, exact regularizer steps, optional lazy
/// coordinate updates, and an optional Lipschitz line search.
#[derive(Debug, Clone)]
pub struct SagState {
    x: Vec<f64>,
    /// `s_i` with `y_i = s_i a_i`.
    memory: Vec<f64>,
    d: Vec<f64>,
    seen: Vec<bool>,
    m: usize,
    k: u64,
    lipschitz: f64,
    lazy: Option<LazyLedger>,
}

impl SagState {
    pub fn new(n: usize, x0: Vec<f64>, lazy: bool) -> Self {
        let p = x0.len();
        Self {
            x: x0,
            memory: vec![0.0; n],
            d: vec![0.0; p],
            seen: vec![false; n],
            m: 0,
            k: 0,
            lipschitz: INITIAL_LIPSCHITZ,
            lazy: lazy.then(|| LazyLedger::new(p)),
        }
    }

    pub fn with_initial_lipschitz(mut self, l0: f64) -> Self {
        self.lipschitz = l0;
        self
    }

    /// Number of distinct components sampled so far.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seen(&self) -> &[bool] {
        &self.seen
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn lipschitz_estimate(&self) -> f64 {
        self.lipschitz
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy.is_some()
    }

    /// Stored loss-derivative scalars `s_i`.
    pub fn memory(&self) -> &[f64] {
        &self.memory
    }

    pub fn memory_sum(&self) -> &[f64] {
        &self.d
    }

    /// The iterate with every coordinate brought up to date.
    pub fn x(&mut self) -> &[f64] {
        if let Some(ledger) = &mut self.lazy {
            ledger.flush(&mut self.x, &self.d);
        }
        &self.x
    }

    /// `‖d − Σ_i s_i a_i‖`, recomputed from scratch.
    pub fn memory_sum_residual(&self, obj: &Objective) -> f64 {
        let mut exact = vec![0.0; self.d.len()];
        for (i, &s) in self.memory.iter().enumerate() {
            obj.features(i).axpy_into(s, &mut exact);
        }
        exact
            .iter()
            .zip(&self.d)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// One modified-SAG step on component `i`. Returns the step size used.
    pub fn step(
        &mut self,
        obj: &Objective,
        rule: SagStep,
        i: usize,
        counter: &mut EvalCounter,
    ) -> Result<f64> {
        check_index(obj, i)?;
        let a = obj.features(i);
        if let Some(ledger) = &mut self.lazy {
            for &j in a.indices() {
                ledger.catch_up(j, &mut self.x, &self.d);
            }
        }
        let z = a.dot(&self.x);
        let label = obj.label(i);
        let s = obj.loss().derivative(label, z);
        counter.component_gradients += 1;

        let alpha = match rule {
            SagStep::Constant(alpha) => alpha,
            SagStep::LineSearch => {
                self.lipschitz = lipschitz_backtrack(
                    obj.loss(),
                    label,
                    z,
                    obj.feature_norm_sq(i),
                    obj.lambda(),
                    self.lipschitz,
                    counter,
                )?;
                1.0 / self.lipschitz
            }
        };
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be finite and nonnegative, got {alpha}"
            )));
        }
        let shrink = alpha * obj.lambda();
        if shrink >= 1.0 {
            return Err(Error::StepTooLarge(shrink));
        }

        if !self.seen[i] {
            self.seen[i] = true;
            self.m += 1;
        }
        let old = self.memory[i];
        for (j, v) in a.iter() {
            self.d[j] = (self.d[j] - old * v) + s * v;
        }
        self.memory[i] = s;
        self.k += 1;

        let c = 1.0 - shrink;
        let w = alpha / self.m as f64;
        match &mut self.lazy {
            Some(ledger) => {
                ledger.record(c, w);
                if ledger.needs_flush() {
                    ledger.flush(&mut self.x, &self.d);
                }
            }
            None => {
                for (xj, dj) in self.x.iter_mut().zip(&self.d) {
                    *xj = c * *xj - w * dj;
                }
            }
        }
        Ok(alpha)
    }
}

impl GradientMemory for SagState {
    fn n(&self) -> usize {
        self.memory.len()
    }

    fn aggregated_step(
        &mut self,
        obj: &Objective,
        alpha: f64,
        i: usize,
        counter: &mut EvalCounter,
    ) -> Result<()> {
        self.step(obj, SagStep::Constant(alpha), i, counter)
            .map(|_| ())
    }

    fn current(&mut self) -> &[f64] {
        self.x()
    }
}

/// Incremental aggregated gradient: the SAG update with a cyclic component order.
#[derive(Debug, Clone)]
pub struct Iag<S> {
    inner: S,
    cursor: usize,
}

impl<S: GradientMemory> Iag<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, cursor: 0 }
    }

    /// Component visited by the next step (0-based).
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut S {
        &mut self.inner
    }

    pub fn step(&mut self, obj: &Objective, alpha: f64, counter: &mut EvalCounter) -> Result<()> {
        self.inner
            .aggregated_step(obj, alpha, self.cursor, counter)?;
        self.cursor = (self.cursor + 1) % self.inner.n();
        Ok(())
    }

    pub fn current(&mut self) -> &[f64] {
        self.inner.current()
    }
}

impl Iag<SagState> {
    /// Cyclic modified-SAG step with any [`SagStep`] rule. Returns the step size used.
    pub fn step_with(
        &mut self,
        obj: &Objective,
        rule: SagStep,
        counter: &mut EvalCounter,
    ) -> Result<f64> {
        let alpha = self.inner.step(obj, rule, self.cursor, counter)?;
        self.cursor = (self.cursor + 1) % self.inner.n();
        Ok(alpha)
    }
}

/// The instantiated Lipschitz inequality
/// `f(x⁺) − f(x) ≤ f'(x)ᵀ(x⁺ − x) + (L/2)‖x⁺ − x‖²`, treated as satisfied when
/// the two sides agree to within `1e-12 · (1 + |f(x)|)`.
pub fn lipschitz_inequality_holds(
    f_x: f64,
    f_next: f64,
    grad_dot_delta: f64,
    delta_sq: f64,
    lipschitz: f64,
) -> bool {
    let lhs = f_next - f_x;
    let rhs = grad_dot_delta + 0.5 * lipschitz * delta_sq;
    lhs <= rhs || (lhs - rhs).abs() <= PRECISION_GUARD * (1.0 + f_x.abs())
}

/// Doubles `lipschitz` until the Lipschitz inequality holds for the component
/// `f(x) = l(b, aᵀx) + (λ/2)‖x‖²` along the loss-gradient step
/// `Δ = −(s/L) a`, where `z = aᵀx`, `s = l'(b, z)` and `q = ‖a‖²`.
///
/// The `λ xᵀΔ` terms appear on both sides of the inequality and cancel, so the
/// test needs only `z`, `s` and `q`. Each doubling costs one extra component
/// evaluation.
pub fn lipschitz_backtrack(
    loss: Loss,
    label: f64,
    z: f64,
    q: f64,
    lambda: f64,
    mut lipschitz: f64,
    counter: &mut EvalCounter,
) -> Result<f64> {
    let s = loss.derivative(label, z);
    let f_x = loss.value(label, z);
    loop {
        let t = 1.0 / lipschitz;
        let z_next = z - s * q * t;
        let delta_sq = s * s * q * t * t;
        let f_next = loss.value(label, z_next) + 0.5 * lambda * delta_sq;
        let grad_dot_delta = -s * s * q * t;
        if lipschitz_inequality_holds(f_x, f_next, grad_dot_delta, delta_sq, lipschitz) {
            return Ok(lipschitz);
        }
        lipschitz *= 2.0;
        counter.line_search_evals += 1;
        if lipschitz > MAX_LIPSCHITZ {
            return Err(Error::LineSearchDiverged(lipschitz));
        }
    }
}
