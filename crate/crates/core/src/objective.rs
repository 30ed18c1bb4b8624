//! ℓ2-regularized empirical risk over a linear model.
//!
//! Component `i` is `f_i(x) = (λ/2)‖x‖² + l(b_i, a_iᵀx)` and the objective is
//! their plain average `g(x) = (1/n) Σ f_i(x)`. Because the model is linear,
//! the loss gradient of a component is the scalar `l'(b_i, a_iᵀx)` times `a_i`;
//! most of the optimizer code only needs that scalar.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::data::{Dataset, SparseVector};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// `log(1 + exp(-b z))` with labels in `{-1, +1}`.
    Logistic,
    /// `(z - b)² / 2` with any real target `b`.
    Squared,
}

impl Loss {
    /// Loss value at margin `z`.
    #[inline]
    pub fn value(self, label: f64, z: f64) -> f64 {
        match self {
            Loss::Logistic => {
                let m = label * z;
                if m > 0.0 {
                    (-m).exp().ln_1p()
                } else {
                    -m + m.exp().ln_1p()
                }
            }
            Loss::Squared => 0.5 * (z - label) * (z - label),
        }
    }

    /// Derivative of the loss with respect to the margin.
    #[inline]
    pub fn derivative(self, label: f64, z: f64) -> f64 {
        match self {
            Loss::Logistic => -label * sigmoid(-label * z),
            Loss::Squared => z - label,
        }
    }

    #[inline]
    pub fn second_derivative(self, label: f64, z: f64) -> f64 {
        match self {
            Loss::Logistic => {
                let s = sigmoid(label * z);
                s * (1.0 - s)
            }
            Loss::Squared => 1.0,
        }
    }

    /// Uniform bound on the second derivative.
    pub fn curvature_bound(self) -> f64 {
        match self {
            Loss::Logistic => 0.25,
            Loss::Squared => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Logistic => "logistic",
            Loss::Squared => "squared",
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Loss::Logistic),
            "squared" => Ok(Loss::Squared),
            other => Err(Error::InvalidParameter(format!("unknown loss {other:?}"))),
        }
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Gradient Lipschitz constant `L` of every component and the guaranteed
/// strong-convexity constant `mu` of the average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub lipschitz: f64,
    pub mu: f64,
}

impl ProblemConstants {
    pub fn condition_ratio(&self) -> f64 {
        self.mu / self.lipschitz
    }
}

/// Value and gradients of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEval {
    pub value: f64,
    /// `λx + l_i'(x)`
    pub gradient: Vec<f64>,
    /// `l_i'(x)` alone, supported on the example's features.
    pub loss_gradient: SparseVector,
}

#[derive(Debug, Clone)]
pub struct Objective {
    loss: Loss,
    lambda: f64,
    data: Arc<Dataset>,
    norms_sq: Vec<f64>,
}

impl Objective {
    pub fn new(data: Arc<Dataset>, loss: Loss, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        if loss == Loss::Logistic {
            if let Some((i, ex)) = data
                .examples()
                .iter()
                .enumerate()
                .find(|(_, e)| e.label != 1.0 && e.label != -1.0)
            {
                return Err(Error::InvalidDataset(format!(
                    "logistic loss needs labels in {{-1, +1}}; example {} has {}",
                    i + 1,
                    ex.label
                )));
            }
        }
        let norms_sq = data
            .examples()
            .iter()
            .map(|e| e.features.norm_sq())
            .collect();
        Ok(Self {
            loss,
            lambda,
            data,
            norms_sq,
        })
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn features(&self, i: usize) -> &SparseVector {
        &self.data.example(i).features
    }

    pub fn label(&self, i: usize) -> f64 {
        self.data.example(i).label
    }

    /// `‖a_i‖²`, precomputed.
    pub fn feature_norm_sq(&self, i: usize) -> f64 {
        self.norms_sq[i]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n(),
            });
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.features(i).dot(x)
    }

    /// Scalar `s` with `l_i'(x) = s · a_i`.
    #[inline]
    pub fn loss_derivative(&self, i: usize, x: &[f64]) -> f64 {
        self.loss.derivative(self.label(i), self.margin(i, x))
    }

    pub fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        0.5 * self.lambda * linalg::norm_sq(x) + self.loss.value(self.label(i), self.margin(i, x))
    }

    /// Writes `f_i'(x) = λx + s a_i` into `out`.
    pub fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let s = self.loss_derivative(i, x);
        for (o, xj) in out.iter_mut().zip(x) {
            *o = self.lambda * xj;
        }
        for (j, v) in self.features(i).iter() {
            out[j] = self.lambda * x[j] + s * v;
        }
    }

    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.component_gradient_into(i, x, &mut g);
        g
    }

    pub fn component_eval(&self, i: usize, x: &[f64]) -> Result<ComponentEval> {
        self.check_index(i)?;
        self.check_dim(x)?;
        let z = self.margin(i, x);
        let b = self.label(i);
        let s = self.loss.derivative(b, z);
        let value = 0.5 * self.lambda * linalg::norm_sq(x) + self.loss.value(b, z);
        Ok(ComponentEval {
            value,
            gradient: self.component_gradient(i, x),
            loss_gradient: self.features(i).scaled(s),
        })
    }

    /// `g(x)`, summed in index order.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, ex) in self.data.examples().iter().enumerate() {
            total += self.loss.value(ex.label, self.margin(i, x));
        }
        total / self.n() as f64 + 0.5 * self.lambda * linalg::norm_sq(x)
    }

    /// Writes `g'(x)` into `out` and returns `g(x)`.
    pub fn value_and_gradient_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut total = 0.0;
        for ex in self.data.examples() {
            let z = ex.features.dot(x);
            total += self.loss.value(ex.label, z);
            ex.features
                .axpy_into(self.loss.derivative(ex.label, z), out);
        }
        let n = self.n() as f64;
        for (o, xj) in out.iter_mut().zip(x) {
            *o = self.lambda * xj + *o / n;
        }
        total / n + 0.5 * self.lambda * linalg::norm_sq(x)
    }

    /// `(g(x), g'(x))`.
    pub fn batch_eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        let mut g = vec![0.0; x.len()];
        let v = self.value_and_gradient_into(x, &mut g);
        Ok((v, g))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.value_and_gradient_into(x, &mut g);
        g
    }

    /// `L = λ + l''_max · max_i ‖a_i‖²` and `mu = λ`.
    pub fn constants(&self) -> ProblemConstants {
        let r = self.norms_sq.iter().copied().fold(0.0, f64::max);
        ProblemConstants {
            lipschitz: self.lambda + self.loss.curvature_bound() * r,
            mu: self.lambda,
        }
    }

    /// Central finite differences of `g`, one coordinate at a time.
    pub fn finite_diff_gradient(&self, x: &[f64], h: f64) -> Vec<f64> {
        assert!(h > 0.0, "finite-difference step must be positive");
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|j| {
                probe[j] = x[j] + h;
                let up = self.value(&probe);
                probe[j] = x[j] - h;
                let down = self.value(&probe);
                probe[j] = x[j];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// Dense Hessian of `g`.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let p = self.dim();
        let n = self.n() as f64;
        let mut h = DMatrix::<f64>::zeros(p, p);
        for ex in self.data.examples() {
            let w = self.loss.second_derivative(ex.label, ex.features.dot(x)) / n;
            for (j, vj) in ex.features.iter() {
                for (k, vk) in ex.features.iter() {
                    h[(j, k)] += w * vj * vk;
                }
            }
        }
        for j in 0..p {
            h[(j, j)] += self.lambda;
        }
        h
    }

    /// Fraction of examples with `sign(a_iᵀx) != b_i`; a zero margin counts as an error.
    pub fn classification_error(&self, x: &[f64]) -> f64 {
        let wrong = self
            .data
            .examples()
            .iter()
            .filter(|ex| {
                let z = ex.features.dot(x);
                let m = z * ex.label;
                m <= 0.0 || m.is_nan()
            })
            .count();
        wrong as f64 / self.n() as f64
    }

    /// Average loss at `x = 0`.
    pub fn mean_loss_at_zero(&self) -> f64 {
        self.data
            .examples()
            .iter()
            .map(|ex| self.loss.value(ex.label, 0.0))
            .sum::<f64>()
            / self.n() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f₁ = ½x², f₂ = ½(x−2)².
    pub(crate) fn toy() -> Objective {
        let data = Dataset::from_dense_rows(&[vec![1.0], vec![1.0]], &[0.0, 2.0]).unwrap();
        Objective::new(Arc::new(data), Loss::Squared, 0.0).unwrap()
    }

    #[test]
    fn logistic_at_origin() {
        let data = Dataset::from_dense_rows(&[vec![2.0, -1.0, 0.5]], &[-1.0]).unwrap();
        let obj = Objective::new(Arc::new(data), Loss::Logistic, 0.0).unwrap();
        let e = obj.component_eval(0, &[0.0; 3]).unwrap();
        assert!((e.value - std::f64::consts::LN_2).abs() < 1e-15);
        // -(b/2) a with b = -1
        assert_eq!(e.loss_gradient.to_dense(), vec![1.0, -0.5, 0.25]);
        assert_eq!(e.gradient, vec![1.0, -0.5, 0.25]);
    }

    #[test]
    fn squared_component() {
        let obj = toy();
        let e = obj.component_eval(1, &[0.0]).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.gradient, vec![-2.0]);
        assert!(obj.component_eval(2, &[0.0]).is_err());
        assert!(obj.component_eval(0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_component_gradient() {
        let obj = toy();
        assert_eq!(obj.component_eval(1, &[2.0]).unwrap().gradient, vec![0.0]);
    }

    #[test]
    fn toy_batch() {
        let obj = toy();
        assert_eq!(obj.batch_eval(&[1.0]).unwrap(), (0.5, vec![0.0]));
        assert_eq!(obj.batch_eval(&[0.0]).unwrap(), (1.0, vec![-1.0]));
    }

    #[test]
    fn single_component_batch_matches() {
        let data = Dataset::from_dense_rows(&[vec![0.3, -1.2]], &[1.0]).unwrap();
        let obj = Objective::new(Arc::new(data), Loss::Logistic, 0.7).unwrap();
        let x = [0.4, 0.9];
        let e = obj.component_eval(0, &x).unwrap();
        let (v, g) = obj.batch_eval(&x).unwrap();
        assert_eq!(v, e.value);
        assert_eq!(g, e.gradient);
    }

    #[test]
    fn lipschitz_examples() {
        let data = Dataset::from_dense_rows(&[vec![2.0, 0.0]], &[1.0]).unwrap();
        let obj = Objective::new(Arc::new(data), Loss::Logistic, 0.1).unwrap();
        let c = obj.constants();
        assert!((c.lipschitz - 1.1).abs() < 1e-15);
        assert_eq!(c.mu, 0.1);

        let c = toy().constants();
        assert_eq!(c.lipschitz, 1.0);
        assert_eq!(c.mu, 0.0);
        // the toy's true curvature is exactly 1
        assert_eq!(toy().hessian(&[0.3])[(0, 0)], 1.0);
    }

    #[test]
    fn finite_differences_on_quadratic() {
        let fd = toy().finite_diff_gradient(&[0.0], 1e-6);
        assert!((fd[0] + 1.0).abs() < 1e-9);
        let fd = toy().finite_diff_gradient(&[1.0], 1e-6);
        assert!(fd[0].abs() < 1e-8);
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let l = Loss::Logistic;
        assert_eq!(l.value(1.0, 1000.0), 0.0);
        assert!((l.value(1.0, -1000.0) - 1000.0).abs() < 1e-9);
        assert!((l.derivative(1.0, -1000.0) + 1.0).abs() < 1e-15);
        assert!(l.derivative(1.0, 1000.0).abs() < 1e-300);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = Arc::new(Dataset::from_dense_rows(&[vec![1.0]], &[2.0]).unwrap());
        assert!(Objective::new(data.clone(), Loss::Logistic, 0.1).is_err());
        assert!(Objective::new(data.clone(), Loss::Squared, -1.0).is_err());
        assert!(Objective::new(data, Loss::Squared, f64::NAN).is_err());
    }

    #[test]
    fn classification_error_counts_ties() {
        let data = Dataset::from_dense_rows(&[vec![1.0], vec![-1.0], vec![0.0]], &[1.0, 1.0, -1.0])
            .unwrap();
        let obj = Objective::new(Arc::new(data), Loss::Logistic, 0.0).unwrap();
        assert!((obj.classification_error(&[1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(obj.classification_error(&[0.0]), 1.0);
    }
}
