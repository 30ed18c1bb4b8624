//! Seeded sweeps that test the convergence bounds and Lyapunov inequalities
//! on concrete instances. Multi-seed sweeps run in parallel; per-seed results
//! are combined in seed order so every report is deterministic.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{Loss, Objective, ProblemConstants};
use crate::optim::{
    run_optimizer, EvalCounter, Iag, Method, OptimizerConfig, SagBasicState, StepRule,
};
use crate::synthetic::SyntheticSpec;

use super::bounds::{
    prop1_bound, prop2_bound, sgd_averaged_iterates, sgd_avg_bound, sgd_init_phase_with_rng,
    TheoryParams,
};
use super::lyapunov::{
    contraction_check, enumerate_next, expected_next_quadratic, lyapunov_q, quadratic_form,
    LyapunovSpec, Optimum, Theta, Variant,
};
use super::reference::{reference_solution, DEFAULT_TOLERANCE};

pub const PROP_PASSES: u64 = 50;

/// An objective with its minimizer and the constants the theory is applied with.
#[derive(Debug, Clone)]
pub struct Instance {
    pub obj: Objective,
    pub constants: ProblemConstants,
    pub x_star: Vec<f64>,
    pub g_star: f64,
}

impl Instance {
    /// Uses the guaranteed constants and the reference solver.
    pub fn solve(obj: Objective) -> Result<Self> {
        let r = reference_solution(&obj, DEFAULT_TOLERANCE)?;
        Ok(Self {
            constants: obj.constants(),
            x_star: r.x,
            g_star: r.value,
            obj,
        })
    }

    /// Squared loss: solves the normal equations and takes `μ` as the exact
    /// smallest Hessian eigenvalue.
    pub fn squared_exact(obj: Objective) -> Result<Self> {
        if obj.loss() != Loss::Squared {
            return Err(Error::InvalidParameter(
                "exact constants need the squared loss".into(),
            ));
        }
        let h = obj.hessian(&vec![0.0; obj.dim()]);
        let mu = h.symmetric_eigenvalues().min();
        if mu.is_nan() || mu <= 0.0 {
            return Err(Error::NotStronglyConvex);
        }
        let x_star = squared_loss_minimizer(&obj)?;
        let lipschitz = obj.constants().lipschitz;
        Ok(Self {
            constants: ProblemConstants {
                lipschitz,
                mu: mu.min(lipschitz),
            },
            g_star: obj.value(&x_star),
            x_star,
            obj,
        })
    }

    pub fn params(&self, x0: &[f64]) -> TheoryParams {
        let mut p = TheoryParams::from_problem(&self.obj, &self.x_star, self.g_star, x0);
        p.lipschitz = self.constants.lipschitz;
        p.mu = self.constants.mu;
        p
    }

    pub fn optimum(&self) -> Optimum {
        Optimum::new(&self.obj, &self.x_star)
    }
}

/// Logistic, `n = 100`, `p = 10`, dense, seed 0, `λ = 0.1`, raw features.
pub fn small_step_instance() -> Result<Instance> {
    let data = SyntheticSpec::new(100, 10, 1.0, 0).generate_train(Loss::Logistic)?;
    Instance::solve(Objective::new(Arc::new(data), Loss::Logistic, 0.1)?)
}

/// Logistic with `n = 400` and `λ = 8 L_loss / 192`, so that `nμ/L = 16`:
/// twice the smallest `n` allowed by the large-step hypothesis at this `λ`.
pub fn large_step_instance() -> Result<Instance> {
    let data = SyntheticSpec::new(400, 10, 1.0, 0).generate_train(Loss::Logistic)?;
    let loss_lipschitz = Loss::Logistic.curvature_bound() * data.max_norm_sq();
    let lambda = 8.0 * loss_lipschitz / (200.0 - 8.0);
    Instance::solve(Objective::new(Arc::new(data), Loss::Logistic, lambda)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    /// Iteration count the bound is evaluated at.
    pub k: u64,
    pub empirical: f64,
    pub bound: f64,
}

impl BoundRow {
    pub fn holds(&self) -> bool {
        self.empirical <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub seeds: u64,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.holds()).count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0 && self.rows.iter().all(|r| r.empirical.is_finite())
    }

    /// Largest `empirical / bound` over all rows.
    pub fn worst_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.empirical / r.bound)
            .fold(0.0, f64::max)
    }
}

fn mean_over_seeds<F>(seeds: u64, per_seed: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let runs: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(&per_seed)
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; runs.first().map_or(0, Vec::len)];
    for run in &runs {
        for (t, v) in total.iter_mut().zip(run) {
            *t += v;
        }
    }
    Ok(total.into_iter().map(|t| t / seeds as f64).collect())
}

/// Mean `‖x^k − x*‖²` of basic SAG with `α = 1/(2nL)` against its bound, at
/// every effective pass.
pub fn check_prop1(inst: &Instance, seeds: u64, passes: u64) -> Result<BoundReport> {
    let n = inst.obj.n() as u64;
    let x0 = vec![0.0; inst.obj.dim()];
    let params = inst.params(&x0);
    let means = mean_over_seeds(seeds, |seed| {
        let cfg = OptimizerConfig::new(Method::SagBasic, StepRule::SmallTheory, passes, seed);
        let mut dists = Vec::with_capacity(passes as usize + 1);
        run_optimizer(&inst.obj, &cfg, |c| {
            dists.push(linalg::dist_sq(c.x, &inst.x_star))
        })?;
        Ok(dists)
    })?;
    let rows = means
        .into_iter()
        .enumerate()
        .map(|(pass, empirical)| {
            let k = pass as u64 * n;
            Ok(BoundRow {
                k,
                empirical,
                bound: prop1_bound(&params, k)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundReport {
        name: "small-step iterate bound",
        seeds,
        rows,
    })
}

/// Runs the large-step protocol for one seed: a pass of stochastic gradient
/// with averaging, then basic SAG from the averaged point with zero memory and
/// `α = 1/(2nμ)`. Returns `g(x^{jn}) − g*` for `j = 1..=passes` and whether any
/// SAG iterate became non-finite.
fn large_step_trajectory(inst: &Instance, seed: u64, passes: u64) -> Result<(Vec<f64>, bool)> {
    let obj = &inst.obj;
    let n = obj.n();
    let alpha = 1.0 / (2.0 * n as f64 * inst.constants.mu);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = sgd_init_phase_with_rng(obj, &vec![0.0; obj.dim()], &mut rng)?;
    let mut gaps = vec![obj.value(&start) - inst.g_star];
    let mut state = SagBasicState::new(n, start);
    let mut counter = EvalCounter::default();
    let mut diverged = false;
    for _ in 1..passes {
        for _ in 0..n {
            state.step(obj, alpha, rng.random_range(0..n), &mut counter)?;
            diverged |= !linalg::all_finite(state.x());
        }
        gaps.push(obj.value(state.x()) - inst.g_star);
    }
    Ok((gaps, diverged))
}

/// Mean `g(x^k) − g*` of the large-step protocol against its bound, for
/// `k = n, 2n, .., passes·n`.
pub fn check_prop2(inst: &Instance, seeds: u64, passes: u64) -> Result<BoundReport> {
    let n = inst.obj.n() as u64;
    let params = inst.params(&vec![0.0; inst.obj.dim()]);
    params.require_large_step()?;
    let means = mean_over_seeds(seeds, |seed| {
        Ok(large_step_trajectory(inst, seed, passes)?.0)
    })?;
    let rows = means
        .into_iter()
        .enumerate()
        .map(|(j, empirical)| {
            let k = (j as u64 + 1) * n;
            Ok(BoundRow {
                k,
                empirical,
                bound: prop2_bound(&params, k)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundReport {
        name: "large-step objective bound",
        seeds,
        rows,
    })
}

/// Mean `g(x̄^k) − g*` of averaged stochastic gradient against its bound for
/// `k ∈ {n/4, n/2, n}`.
pub fn check_sgd_phase(inst: &Instance, seeds: u64) -> Result<BoundReport> {
    let n = inst.obj.n() as u64;
    let ks: Vec<u64> = [n / 4, n / 2, n].into_iter().filter(|&k| k > 0).collect();
    let x0 = vec![0.0; inst.obj.dim()];
    let params = inst.params(&x0);
    let means = mean_over_seeds(seeds, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let avgs = sgd_averaged_iterates(&inst.obj, &x0, &ks, &mut rng)?;
        Ok(avgs
            .iter()
            .map(|x| inst.obj.value(x) - inst.g_star)
            .collect())
    })?;
    let rows = ks
        .iter()
        .zip(means)
        .map(|(&k, empirical)| {
            Ok(BoundRow {
                k,
                empirical,
                bound: sgd_avg_bound(&params, k)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundReport {
        name: "averaged stochastic gradient bound",
        seeds,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub seeds: u64,
    /// Seeds whose SAG trajectory produced a non-finite iterate or objective.
    pub sag_failures: u64,
    /// Whether cyclic IAG with the same step exceeded `10 g(x⁰)`.
    pub iag_diverged: bool,
    pub iag_final_objective: f64,
}

/// Large-step SAG stays finite over `passes · n` steps for every seed, and
/// reports whether IAG with the same step blows up.
pub fn check_large_step_robustness(
    inst: &Instance,
    seeds: u64,
    passes: u64,
) -> Result<RobustnessReport> {
    let failures: Vec<bool> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let (gaps, diverged) = large_step_trajectory(inst, seed, passes)?;
            Ok(diverged || gaps.iter().any(|g| !g.is_finite()))
        })
        .collect::<Result<_>>()?;

    let obj = &inst.obj;
    let n = obj.n();
    let alpha = 1.0 / (2.0 * n as f64 * inst.constants.mu);
    let x0 = vec![0.0; obj.dim()];
    let limit = 10.0 * obj.value(&x0);
    let mut iag = Iag::new(SagBasicState::new(n, x0));
    let mut counter = EvalCounter::default();
    let mut iag_diverged = false;
    let mut value = obj.value(iag.current());
    for _ in 0..passes {
        for _ in 0..n {
            iag.step(obj, alpha, &mut counter)?;
        }
        value = obj.value(iag.current());
        if value.is_nan() || value > limit {
            iag_diverged = true;
            break;
        }
    }
    Ok(RobustnessReport {
        seeds,
        sag_failures: failures.into_iter().filter(|f| *f).count() as u64,
        iag_diverged,
        iag_final_objective: value,
    })
}

/// Random problem families for the Lyapunov checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Dense logistic with `λ ∈ [0.01, 1]`, guaranteed constants.
    Logistic,
    /// `p = 1` squared loss with `|a_i| = r` for all `i`, so `μ = L` exactly.
    Isotropic,
    /// Logistic with `λ` large enough for `nμ/L ≥ 8`.
    WellConditioned,
}

pub fn random_instance<R: Rng>(
    rng: &mut R,
    family: Family,
    n: usize,
    p: usize,
) -> Result<Instance> {
    match family {
        Family::Logistic | Family::WellConditioned => {
            let seed = rng.random();
            let data = SyntheticSpec::new(n, p, 1.0, seed).generate_train(Loss::Logistic)?;
            let lambda = if family == Family::Logistic {
                10f64.powf(rng.random_range(-2.0..=0.0))
            } else {
                // nλ/(λ + R/4) ≥ 8  ⇔  λ ≥ 2R/(n − 8)
                let r = data.max_norm_sq();
                2.0 * r / (n as f64 - 8.0) * rng.random_range(1.0..2.0)
            };
            Instance::solve(Objective::new(Arc::new(data), Loss::Logistic, lambda)?)
        }
        Family::Isotropic => {
            let r = [0.5, 1.0, 2.0][rng.random_range(0..3)];
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![if rng.random::<bool>() { r } else { -r }])
                .collect();
            let labels: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lambda = if rng.random::<bool>() {
                0.0
            } else {
                rng.random_range(0.0..1.0)
            };
            let data = Dataset::from_dense_rows(&rows, &labels)?;
            Instance::squared_exact(Objective::new(Arc::new(data), Loss::Squared, lambda)?)
        }
    }
}

/// A random state around `θ*` with displacements on several scales.
pub fn random_theta<R: Rng>(rng: &mut R, opt: &Optimum) -> Theta {
    let star = &opt.theta;
    let x_scale = 10f64.powf(rng.random_range(-2.0..1.0));
    let y_scale = 10f64.powf(rng.random_range(-2.0..1.0));
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let x = star.x().iter().map(|v| v + x_scale * normal()).collect();
    let y = star
        .memory()
        .iter()
        .map(|v| v + y_scale * normal())
        .collect();
    Theta::new(star.n(), y, x).expect("shapes copied from the optimum")
}

const LEMMA_NS: [usize; 3] = [2, 4, 8];
const LEMMA_PS: [usize; 3] = [1, 2, 4];

fn case_instance(rng: &mut ChaCha8Rng, case: u64) -> Result<Instance> {
    let n = LEMMA_NS[(case % 3) as usize];
    let p = LEMMA_PS[((case / 3) % 3) as usize];
    // every fourth case is a large-step-eligible instance
    if case % 4 == 3 {
        random_instance(rng, Family::Isotropic, 8, 1)
    } else {
        random_instance(rng, Family::Logistic, n, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContractionReport {
    pub small_cases: u64,
    pub small_failures: u64,
    pub large_cases: u64,
    pub large_failures: u64,
    /// Largest `(lhs − rhs) / (1 + |rhs|)` observed.
    pub worst_excess: f64,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.small_failures == 0 && self.large_failures == 0 && self.large_cases > 0
    }
}

/// One-step contraction on `cases` random (instance, θ) pairs with
/// `n ∈ {2, 4, 8}` and `p ∈ {1, 2, 4}`; the large step is checked wherever
/// its hypothesis holds.
pub fn check_contraction(cases: u64, seed: u64) -> Result<ContractionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ContractionReport {
        worst_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for case in 0..cases {
        let inst = case_instance(&mut rng, case)?;
        let opt = inst.optimum();
        let theta = random_theta(&mut rng, &opt);
        let n = inst.obj.n();
        for variant in [Variant::SmallStep, Variant::LargeStep] {
            let spec = match LyapunovSpec::new(variant, n, inst.constants) {
                Ok(s) => s,
                Err(Error::LargeStepHypothesis { .. }) => continue,
                Err(e) => return Err(e),
            };
            let c = contraction_check(&spec, &theta, &opt, &inst.obj)?;
            report.worst_excess = report
                .worst_excess
                .max((c.lhs - c.rhs) / (1.0 + c.rhs.abs()));
            let (cases, failures) = match variant {
                Variant::SmallStep => (&mut report.small_cases, &mut report.small_failures),
                Variant::LargeStep => (&mut report.large_cases, &mut report.large_failures),
            };
            *cases += 1;
            *failures += u64::from(!c.holds);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationReport {
    pub cases: u64,
    pub max_relative_error: f64,
}

impl ExpectationReport {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn passed(&self) -> bool {
        self.max_relative_error < Self::TOLERANCE
    }
}

/// Closed-form expected quadratic form against exhaustive enumeration, on
/// random instances, states and (for half the cases) random block weights.
pub fn check_expected_quadratic(cases: u64, seed: u64) -> Result<ExpectationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let inst = case_instance(&mut rng, case)?;
        let opt = inst.optimum();
        let theta = random_theta(&mut rng, &opt);
        let n = inst.obj.n();
        let mut spec = LyapunovSpec::small_step(n, inst.constants)?;
        if case % 2 == 1 {
            let mut w = || rng.random_range(-2.0..2.0);
            spec.a_id = w();
            spec.a_ee = w();
            spec.b_e = w();
            spec.c_id = w();
        }
        let closed = expected_next_quadratic(&spec, &theta, &opt, &inst.obj);
        let exact = enumerate_next(&spec, &theta, &inst.obj, |t| quadratic_form(&spec, t, &opt))?;
        let scale = enumerate_next(&spec, &theta, &inst.obj, |t| {
            abs_quadratic_form(&spec, t, &opt)
        })?;
        worst = worst.max((closed - exact).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(ExpectationReport {
        cases,
        max_relative_error: worst,
    })
}

/// The quadratic form with every term made nonnegative; the natural scale for
/// relative errors of a quantity whose terms may cancel.
fn abs_quadratic_form(spec: &LyapunovSpec, theta: &Theta, opt: &Optimum) -> f64 {
    let abs = LyapunovSpec {
        a_id: spec.a_id.abs(),
        a_ee: spec.a_ee.abs(),
        b_e: spec.b_e.abs(),
        c_id: spec.c_id.abs(),
        ..*spec
    };
    let u: Vec<f64> = theta
        .memory()
        .iter()
        .zip(opt.theta.memory())
        .map(|(a, b)| a - b)
        .collect();
    let p = theta.dim();
    let mut u_sum = vec![0.0; p];
    for row in u.chunks_exact(p) {
        linalg::axpy(1.0, row, &mut u_sum);
    }
    let v = linalg::sub(theta.x(), opt.theta.x());
    abs.a_id * linalg::norm_sq(&u)
        + abs.a_ee * linalg::norm_sq(&u_sum)
        + 2.0 * abs.b_e * linalg::norm(&u_sum) * linalg::norm(&v)
        + abs.c_id * linalg::norm_sq(&v)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DominationReport {
    pub small_cases: u64,
    pub small_violations: u64,
    pub large_cases: u64,
    pub large_violations: u64,
}

impl DominationReport {
    pub const SLACK: f64 = 1e-10;

    pub fn passed(&self) -> bool {
        self.small_violations == 0 && self.large_violations == 0
    }
}

/// `Q_small ≥ ⅓‖x − x*‖²` and `Q_large ≥ (6/7)(g(x) − g*)` on `cases` random
/// states each.
pub fn check_domination(cases: u64, seed: u64) -> Result<DominationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DominationReport::default();
    for case in 0..cases {
        let n = LEMMA_NS[(case % 3) as usize];
        let p = LEMMA_PS[((case / 3) % 3) as usize];
        let inst = random_instance(&mut rng, Family::Logistic, n, p)?;
        let opt = inst.optimum();
        let theta = random_theta(&mut rng, &opt);
        let spec = LyapunovSpec::small_step(n, inst.constants)?;
        let q = lyapunov_q(&spec, &theta, &opt, &inst.obj);
        let floor = linalg::dist_sq(theta.x(), &inst.x_star) / 3.0;
        report.small_cases += 1;
        report.small_violations += u64::from(q < floor - DominationReport::SLACK * (1.0 + floor));

        let inst = if case % 2 == 0 {
            random_instance(&mut rng, Family::Isotropic, 8, 1)?
        } else {
            random_instance(&mut rng, Family::WellConditioned, 16, p)?
        };
        let opt = inst.optimum();
        let theta = random_theta(&mut rng, &opt);
        let spec = LyapunovSpec::large_step(inst.obj.n(), inst.constants)?;
        let q = lyapunov_q(&spec, &theta, &opt, &inst.obj);
        let floor = 6.0 / 7.0 * (inst.obj.value(theta.x()) - inst.g_star);
        report.large_cases += 1;
        report.large_violations +=
            u64::from(q < floor - DominationReport::SLACK * (1.0 + floor.abs()));
    }
    Ok(report)
}

/// Solves `(AᵀA/n + λI) x = Aᵀb/n` for a squared-loss objective.
pub fn squared_loss_minimizer(obj: &Objective) -> Result<Vec<f64>> {
    let p = obj.dim();
    let h: DMatrix<f64> = obj.hessian(&vec![0.0; p]);
    let mut rhs = DVector::zeros(p);
    for i in 0..obj.n() {
        obj.features(i)
            .axpy_into(obj.label(i) / obj.n() as f64, rhs.as_mut_slice());
    }
    let chol = h.cholesky().ok_or(Error::NotStronglyConvex)?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}
