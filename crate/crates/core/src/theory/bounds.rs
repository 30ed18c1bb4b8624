use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::Objective;

/// Inputs shared by the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub n: usize,
    pub lipschitz: f64,
    pub mu: f64,
    /// `‖x⁰ − x*‖²`
    pub dist0_sq: f64,
    /// `(1/n) Σ ‖f_i'(x*)‖²`
    pub sigma_sq: f64,
    /// `g(x⁰) − g(x*)`
    pub gap0: f64,
}

impl TheoryParams {
    /// Derives every field from an objective, its optimum and a start point.
    pub fn from_problem(obj: &Objective, x_star: &[f64], g_star: f64, x0: &[f64]) -> Self {
        let c = obj.constants();
        Self {
            n: obj.n(),
            lipschitz: c.lipschitz,
            mu: c.mu,
            dist0_sq: linalg::dist_sq(x0, x_star),
            sigma_sq: sigma_sq_at_optimum(obj, x_star),
            gap0: obj.value(x0) - g_star,
        }
    }

    fn require_mu(&self) -> Result<()> {
        if self.mu > 0.0 {
            Ok(())
        } else {
            Err(Error::NotStronglyConvex)
        }
    }

    /// `n ≥ 8L/μ`, with a relative tolerance of `1e-12` for instances built
    /// to sit exactly on the boundary.
    pub fn large_step_feasible(&self) -> bool {
        self.mu > 0.0 && self.n as f64 >= 8.0 * self.lipschitz / self.mu * (1.0 - LARGE_STEP_SLACK)
    }

    pub fn require_large_step(&self) -> Result<()> {
        self.require_mu()?;
        if self.large_step_feasible() {
            Ok(())
        } else {
            Err(Error::LargeStepHypothesis {
                n: self.n,
                required: 8.0 * self.lipschitz / self.mu,
            })
        }
    }
}

pub(crate) const LARGE_STEP_SLACK: f64 = 1e-12;

/// `(1/n) Σ_i ‖f_i'(x*)‖²`
pub fn sigma_sq_at_optimum(obj: &Objective, x_star: &[f64]) -> f64 {
    let mut g = vec![0.0; x_star.len()];
    let total: f64 = (0..obj.n())
        .map(|i| {
            obj.component_gradient_into(i, x_star, &mut g);
            linalg::norm_sq(&g)
        })
        .sum();
    total / obj.n() as f64
}

/// Bound on `E‖x^k − x*‖²` for SAG with `α = 1/(2nL)`:
/// `(1 − μ/(8Ln))^k [3‖x⁰ − x*‖² + 9σ²/(4L²)]`.
pub fn prop1_bound(params: &TheoryParams, k: u64) -> Result<f64> {
    params.require_mu()?;
    let l = params.lipschitz;
    let rate = 1.0 - params.mu / (8.0 * l * params.n as f64);
    let envelope = 3.0 * params.dist0_sq + 9.0 * params.sigma_sq / (4.0 * l * l);
    Ok(powi(rate, k) * envelope)
}

/// Bound on `E[g(x^k) − g(x*)]` for SAG with `α = 1/(2nμ)` started from one
/// averaged pass of stochastic gradient: `C (1 − 1/(8n))^k` with
/// `C = (16L/(3n))‖x⁰ − x*‖² + (4σ²/(3nμ))(8 ln(1 + μn/(4L)) + 1)`.
pub fn prop2_bound(params: &TheoryParams, k: u64) -> Result<f64> {
    params.require_large_step()?;
    let n = params.n as f64;
    let l = params.lipschitz;
    let mu = params.mu;
    let c = 16.0 * l / (3.0 * n) * params.dist0_sq
        + 4.0 * params.sigma_sq / (3.0 * n * mu) * (8.0 * (mu * n / (4.0 * l)).ln_1p() + 1.0);
    Ok(c * powi(1.0 - 1.0 / (8.0 * n), k))
}

/// Bound on `E[g(x̄^k) − g(x*)]` for the averaged iterate of `k` stochastic
/// gradient steps with step sizes [`sgd_step_size`]:
/// `(2L/k)‖x⁰ − x*‖² + (4σ²/(kμ)) ln(1 + μk/(4L))`.
pub fn sgd_avg_bound(params: &TheoryParams, k: u64) -> Result<f64> {
    params.require_mu()?;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "the averaged bound needs k >= 1".into(),
        ));
    }
    let k = k as f64;
    let l = params.lipschitz;
    let mu = params.mu;
    Ok(2.0 * l / k * params.dist0_sq
        + 4.0 * params.sigma_sq / (k * mu) * (mu * k / (4.0 * l)).ln_1p())
}

/// `γ_k = 1 / (2L + (μ/2) k)`, for `k ≥ 1`.
pub fn sgd_step_size(lipschitz: f64, mu: f64, k: u64) -> f64 {
    1.0 / (2.0 * lipschitz + 0.5 * mu * k as f64)
}

/// Averages `x̄^k = (1/k) Σ_{i<k} x̃^i` of the stochastic gradient iterates
/// `x̃^k = x̃^{k−1} − γ_k f_{i_k}'(x̃^{k−1})`, returned for every `k` in `ks`
/// (sorted ascending, each `≥ 1`).
pub fn sgd_averaged_iterates<R: Rng>(
    obj: &Objective,
    x0: &[f64],
    ks: &[u64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let c = obj.constants();
    if c.mu <= 0.0 {
        return Err(Error::NotStronglyConvex);
    }
    if ks.first() == Some(&0) || ks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "averaging horizons must be positive and sorted".into(),
        ));
    }
    let n = obj.n();
    let mut x = x0.to_vec();
    let mut sum = vec![0.0; x.len()];
    let mut grad = vec![0.0; x.len()];
    let mut out = Vec::with_capacity(ks.len());
    let mut wanted = ks.iter().peekable();
    let last = ks.last().copied().unwrap_or(0);
    for k in 1..=last {
        linalg::axpy(1.0, &x, &mut sum);
        while wanted.next_if_eq(&&k).is_some() {
            out.push(sum.iter().map(|s| s / k as f64).collect());
        }
        if k == last {
            break;
        }
        let i = rng.random_range(0..n);
        obj.component_gradient_into(i, &x, &mut grad);
        linalg::axpy(-sgd_step_size(c.lipschitz, c.mu, k), &grad, &mut x);
    }
    Ok(out)
}

/// One pass of stochastic gradient with the `γ_k` schedule, returning the
/// average of the `n` pre-step iterates `x̃⁰..x̃^{n−1}`.
pub fn sgd_init_phase_with_rng<R: Rng>(
    obj: &Objective,
    x0: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut v = sgd_averaged_iterates(obj, x0, &[obj.n() as u64], rng)?;
    Ok(v.pop().expect("one horizon requested"))
}

pub fn sgd_init_phase(obj: &Objective, x0: &[f64], seed: u64) -> Result<Vec<f64>> {
    sgd_init_phase_with_rng(obj, x0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn powi(base: f64, k: u64) -> f64 {
    match i32::try_from(k) {
        Ok(k) => base.powi(k),
        Err(_) => base.powf(k as f64),
    }
}
