//! Shared fixtures for unit tests.

use std::sync::Arc;

use crate::data::Dataset;
use crate::objective::{Loss, Objective};
use crate::synthetic::SyntheticSpec;

/// f₁ = ½x², f₂ = ½(x−2)²; minimizer 1, L = μ = 1.
pub fn toy() -> Objective {
    let data = Dataset::from_dense_rows(&[vec![1.0], vec![1.0]], &[0.0, 2.0]).unwrap();
    Objective::new(Arc::new(data), Loss::Squared, 0.0).unwrap()
}

pub fn synthetic(
    n: usize,
    p: usize,
    density: f64,
    seed: u64,
    loss: Loss,
    lambda: f64,
) -> Objective {
    let data = SyntheticSpec::new(n, p, density, seed)
        .generate_train(loss)
        .unwrap();
    Objective::new(Arc::new(data), loss, lambda).unwrap()
}

/// Single component ½(x − c)².
pub fn toy_single(c: f64) -> Objective {
    let data = Dataset::from_dense_rows(&[vec![1.0]], &[c]).unwrap();
    Objective::new(Arc::new(data), Loss::Squared, 0.0).unwrap()
}
