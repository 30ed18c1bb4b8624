//! Seeded synthetic problems with a planted linear model.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Example, SparseVector};
use crate::error::{Error, Result};
use crate::objective::Loss;

/// `n` examples in `p` dimensions; each coordinate is stored with probability
/// `density` and drawn uniformly from `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub density: f64,
    pub seed: u64,
    /// Standard deviation of the additive noise on the planted margin.
    pub noise: f64,
}

impl SyntheticSpec {
    pub const DEFAULT_NOISE: f64 = 0.5;

    pub fn new(n: usize, p: usize, density: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            density,
            seed,
            noise: Self::DEFAULT_NOISE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParameter(
                "synthetic n and p must be positive".into(),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "synthetic density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter("noise must be nonnegative".into()));
        }
        Ok(())
    }

    /// Training and test sets of `n` examples each, drawn from the same planted model.
    pub fn generate(&self, loss: Loss) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        // unit-variance margin for a typical example
        let w_scale = (3.0 / (self.p as f64 * self.density)).sqrt();
        let w: Vec<f64> = (0..self.p)
            .map(|_| normal.sample(&mut rng) * w_scale)
            .collect();
        let train = self.draw(&mut rng, &w, loss)?;
        let test = self.draw(&mut rng, &w, loss)?;
        Ok((train, test))
    }

    /// Training set only.
    pub fn generate_train(&self, loss: Loss) -> Result<Dataset> {
        Ok(self.generate(loss)?.0)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, w: &[f64], loss: Loss) -> Result<Dataset> {
        let normal = Normal::new(0.0, self.noise.max(f64::MIN_POSITIVE)).expect("normal");
        let mut examples = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let mut entries = Vec::new();
            for j in 0..self.p {
                if self.density >= 1.0 || rng.random::<f64>() < self.density {
                    let v: f64 = rng.random_range(-1.0..=1.0);
                    entries.push((j, v));
                }
            }
            let features = SparseVector::new(self.p, entries)?;
            let eps = if self.noise > 0.0 {
                normal.sample(rng)
            } else {
                0.0
            };
            let margin = features.dot(w) + eps;
            let label = match loss {
                Loss::Logistic => {
                    if margin >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Loss::Squared => margin,
            };
            examples.push(Example { features, label });
        }
        Dataset::new(examples, self.p)
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.n, self.p, self.density, self.seed)
    }
}

/// Parses `n,p,density,seed`.
impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::InvalidParameter(format!("expected n,p,density,seed, got {s:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let spec = SyntheticSpec::new(
            parts[0].parse().map_err(|_| bad())?,
            parts[1].parse().map_err(|_| bad())?,
            parts[2].parse().map_err(|_| bad())?,
            parts[3].parse().map_err(|_| bad())?,
        );
        spec.validate()?;
        Ok(spec)
    }
}
