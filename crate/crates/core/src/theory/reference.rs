use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::Objective;

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Largest dimension solved with Newton's method; bigger problems use
/// line-searched gradient descent.
pub const NEWTON_MAX_DIM: usize = 2048;
const MAX_NEWTON_ITERS: usize = 500;
const MAX_FG_PASSES: f64 = 1e7;
/// Gradient norm below which stalling at rounding level counts as converged.
const STALL_TOLERANCE: f64 = 1e-9;

/// The minimizer `x*` and optimal value `g(x*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

pub fn reference_solution(obj: &Objective, tol: f64) -> Result<Reference> {
    reference_solution_from(obj, &vec![0.0; obj.dim()], tol)
}

/// Minimizes `g` from `x0` until `‖g'(x)‖ ≤ tol`.
///
/// Up to [`NEWTON_MAX_DIM`] coordinates this is a damped Newton method, which
/// also handles `λ = 0` whenever the Hessian is positive definite along the
/// path. Larger problems need `λ > 0`.
///
/// When rounding prevents reaching `tol`, the best iterate is accepted as long
/// as its gradient norm is below `1e-9`.
pub fn reference_solution_from(obj: &Objective, x0: &[f64], tol: f64) -> Result<Reference> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    if obj.dim() <= NEWTON_MAX_DIM {
        newton(obj, x0, tol)
    } else if obj.constants().mu > 0.0 {
        gradient_descent(obj, x0, tol)
    } else {
        Err(Error::NotStronglyConvex)
    }
}

fn newton(obj: &Objective, x0: &[f64], tol: f64) -> Result<Reference> {
    let p = obj.dim();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; p];
    let mut f = obj.value_and_gradient_into(&x, &mut grad);
    let mut gnorm = linalg::norm(&grad);
    let mut trial = vec![0.0; p];
    let mut trial_grad = vec![0.0; p];

    for _ in 0..MAX_NEWTON_ITERS {
        if gnorm <= tol {
            break;
        }
        let h = obj.hessian(&x);
        let chol = Cholesky::new(h).ok_or(Error::NotStronglyConvex)?;
        let dir = chol.solve(&-DVector::from_column_slice(&grad));
        let slope = linalg::dot(&grad, dir.as_slice());

        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-20 {
            for j in 0..p {
                trial[j] = x[j] + t * dir[j];
            }
            let f_new = obj.value_and_gradient_into(&trial, &mut trial_grad);
            let g_new = linalg::norm(&trial_grad);
            // near the optimum value differences drown in rounding; fall back to the gradient norm
            if f_new <= f + 1e-4 * t * slope
                || (t == 1.0 && g_new < gnorm && f_new <= f + 1e-14 * (1.0 + f.abs()))
            {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                f = f_new;
                gnorm = g_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    finish(x, f, gnorm, tol, 0.0)
}

fn gradient_descent(obj: &Objective, x0: &[f64], tol: f64) -> Result<Reference> {
    let p = obj.dim();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; p];
    let mut f = obj.value_and_gradient_into(&x, &mut grad);
    let mut gnorm = linalg::norm(&grad);
    let mut lip = 1.0;
    let mut passes = 1.0;
    let mut trial = vec![0.0; p];
    let mut trial_grad = vec![0.0; p];
    let mut stalls = 0;

    while gnorm > tol && passes < MAX_FG_PASSES {
        for j in 0..p {
            trial[j] = x[j] - grad[j] / lip;
        }
        let f_new = obj.value_and_gradient_into(&trial, &mut trial_grad);
        passes += 1.0;
        let g_new = linalg::norm(&trial_grad);
        if f_new <= f - 0.5 * gnorm * gnorm / lip || g_new < gnorm {
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut grad, &mut trial_grad);
            f = f_new;
            gnorm = g_new;
            lip = (lip * 0.5).max(f64::MIN_POSITIVE);
            stalls = 0;
        } else {
            lip *= 2.0;
            stalls += 1;
            if stalls > 200 {
                break;
            }
        }
    }
    finish(x, f, gnorm, tol, passes)
}

fn finish(x: Vec<f64>, value: f64, grad_norm: f64, tol: f64, passes: f64) -> Result<Reference> {
    if grad_norm <= tol.max(STALL_TOLERANCE) && value.is_finite() {
        Ok(Reference {
            x,
            value,
            grad_norm,
        })
    } else {
        Err(Error::ReferenceNotConverged { grad_norm, passes })
    }
}
