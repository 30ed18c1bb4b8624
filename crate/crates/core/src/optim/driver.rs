use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{Objective, ProblemConstants};

use super::full::{AfgState, FgState};
use super::sag::{Iag, SagBasicState, SagState, SagStep};
use super::stochastic::{GradAvgState, MomentumState, SgOptions, SgState};
use super::{EvalCounter, StepSchedule};

/// Every optimizer the driver can run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Fg,
    Afg,
    Sg,
    Pegasos,
    /// Averaged SG with the `α₀ · pass^(−2/3)` schedule.
    Asg,
    Momentum {
        beta: f64,
    },
    GradAvg,
    SagBasic,
    /// Scalar-memory SAG with `m`-counting and the exact regularizer step.
    Sag,
    IagBasic,
    Iag,
}

impl Method {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn all() -> [Method; 11] {
        [
            Method::Fg,
            Method::Afg,
            Method::Sg,
            Method::Pegasos,
            Method::Asg,
            Method::Momentum {
                beta: Self::DEFAULT_MOMENTUM,
            },
            Method::GradAvg,
            Method::SagBasic,
            Method::Sag,
            Method::IagBasic,
            Method::Iag,
        ]
    }

    /// Whether one step touches all `n` components.
    pub fn is_full_gradient(self) -> bool {
        matches!(self, Method::Fg | Method::Afg)
    }

    /// Whether the step rule is ignored in favour of a built-in schedule.
    pub fn has_builtin_schedule(self) -> bool {
        matches!(self, Method::Pegasos)
    }

    fn supports_line_search(self) -> bool {
        matches!(self, Method::Sag | Method::Iag)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Fg => f.write_str("fg"),
            Method::Afg => f.write_str("afg"),
            Method::Sg => f.write_str("sg"),
            Method::Pegasos => f.write_str("pegasos"),
            Method::Asg => f.write_str("asg"),
            Method::Momentum { beta } => write!(f, "momentum:{beta}"),
            Method::GradAvg => f.write_str("grad-avg"),
            Method::SagBasic => f.write_str("sag-basic"),
            Method::Sag => f.write_str("sag"),
            Method::IagBasic => f.write_str("iag-basic"),
            Method::Iag => f.write_str("iag"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let method = match s.as_str() {
            "fg" => Method::Fg,
            "afg" => Method::Afg,
            "sg" => Method::Sg,
            "pegasos" => Method::Pegasos,
            "asg" => Method::Asg,
            "momentum" => Method::Momentum {
                beta: Self::DEFAULT_MOMENTUM,
            },
            "grad-avg" => Method::GradAvg,
            "sag-basic" => Method::SagBasic,
            "sag" => Method::Sag,
            "iag-basic" => Method::IagBasic,
            "iag" => Method::Iag,
            other => match other.strip_prefix("momentum:") {
                Some(b) => {
                    let beta: f64 = b.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad momentum coefficient {b:?}"))
                    })?;
                    if !(0.0..1.0).contains(&beta) {
                        return Err(Error::InvalidParameter(format!(
                            "momentum coefficient must lie in [0, 1), got {beta}"
                        )));
                    }
                    Method::Momentum { beta }
                }
                None => return Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
            },
        };
        Ok(method)
    }
}

/// How the (initial) step size is chosen. For ASG the resolved value is `α₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Constant(f64),
    /// `c / L`
    InverseLipschitz(f64),
    /// `2 / (L + nμ)`
    SagDefault,
    /// `1 / (2nL)`
    SmallTheory,
    /// `1 / (2nμ)`
    LargeTheory,
    /// `1 / L_k` with the doubling line search (modified SAG and IAG only).
    LineSearch,
}

impl StepRule {
    /// The constant step size, or `None` for the line search.
    pub fn resolve(&self, constants: ProblemConstants, n: usize) -> Result<Option<f64>> {
        let l = constants.lipschitz;
        let mu = constants.mu;
        let n = n as f64;
        let alpha = match *self {
            StepRule::Constant(a) => a,
            StepRule::InverseLipschitz(c) => c / l,
            StepRule::SagDefault => 2.0 / (l + n * mu),
            StepRule::SmallTheory => 1.0 / (2.0 * n * l),
            StepRule::LargeTheory => {
                if mu <= 0.0 {
                    return Err(Error::NotStronglyConvex);
                }
                1.0 / (2.0 * n * mu)
            }
            StepRule::LineSearch => return Ok(None),
        };
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {alpha}"
            )));
        }
        Ok(Some(alpha))
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepRule::Constant(a) => write!(f, "{a:e}"),
            StepRule::InverseLipschitz(c) => write!(f, "{c:e}/L"),
            StepRule::SagDefault => f.write_str("2/(L+n*mu)"),
            StepRule::SmallTheory => f.write_str("1/(2n*L)"),
            StepRule::LargeTheory => f.write_str("1/(2n*mu)"),
            StepRule::LineSearch => f.write_str("linesearch"),
        }
    }
}

impl FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        let bad = || Error::InvalidParameter(format!("unrecognized step rule {s:?}"));
        let rule = match t.as_str() {
            "linesearch" | "ls" => StepRule::LineSearch,
            "2/(l+n*mu)" | "2/(l+nmu)" | "sag" | "default" => StepRule::SagDefault,
            "1/(2n*l)" | "1/(2nl)" | "small" => StepRule::SmallTheory,
            "1/(2n*mu)" | "1/(2nmu)" | "large" => StepRule::LargeTheory,
            "1/l" => StepRule::InverseLipschitz(1.0),
            _ => match t.strip_suffix("/l") {
                Some(c) => StepRule::InverseLipschitz(c.parse().map_err(|_| bad())?),
                None => StepRule::Constant(t.parse().map_err(|_| bad())?),
            },
        };
        match rule {
            StepRule::Constant(v) | StepRule::InverseLipschitz(v)
                if !(v > 0.0 && v.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "step size must be positive and finite, got {v}"
                )))
            }
            r => Ok(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub step: StepRule,
    /// Effective passes to run; a checkpoint is emitted after each one.
    pub passes: u64,
    pub seed: u64,
    /// Lazy coordinate updates for the modified SAG/IAG variants.
    pub lazy: bool,
    /// Starting point; zero when absent.
    pub x0: Option<Vec<f64>>,
}

impl OptimizerConfig {
    pub fn new(method: Method, step: StepRule, passes: u64, seed: u64) -> Self {
        Self {
            method,
            step,
            passes,
            seed,
            lazy: true,
            x0: None,
        }
    }
}

/// The state handed to the observer after every integer effective pass.
#[derive(Debug, Clone, Copy)]
pub struct Checkpoint<'a> {
    pub pass: u64,
    /// The reported iterate (the running average for ASG).
    pub x: &'a [f64],
    pub counter: EvalCounter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub counter: EvalCounter,
    pub steps: u64,
    /// The run stopped early because the iterate became non-finite.
    pub diverged: bool,
    pub x: Vec<f64>,
    /// Final line-search estimate, when one was used.
    pub lipschitz_estimate: Option<f64>,
}

enum Engine {
    Fg(FgState, f64),
    Afg(AfgState, f64),
    Sg(SgState, StepSchedule),
    Momentum(MomentumState, f64, f64),
    GradAvg(GradAvgState, f64),
    SagBasic(SagBasicState, f64),
    Sag(SagState, SagStep),
    IagBasic(Iag<SagBasicState>, f64),
    Iag(Iag<SagState>, SagStep),
}

impl Engine {
    fn build(obj: &Objective, config: &OptimizerConfig) -> Result<Self> {
        let n = obj.n();
        let x0 = match &config.x0 {
            Some(x) if x.len() != obj.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: obj.dim(),
                    got: x.len(),
                })
            }
            Some(x) => x.clone(),
            None => vec![0.0; obj.dim()],
        };
        if !config.method.supports_line_search() && config.step == StepRule::LineSearch {
            return Err(Error::InvalidParameter(format!(
                "the line search is only available for sag and iag, not {}",
                config.method
            )));
        }
        let constant = || -> Result<f64> {
            Ok(config
                .step
                .resolve(obj.constants(), n)?
                .expect("line search rejected above"))
        };
        let sag_step = || -> Result<SagStep> {
            Ok(match config.step.resolve(obj.constants(), n)? {
                Some(a) => SagStep::Constant(a),
                None => SagStep::LineSearch,
            })
        };
        let engine = match config.method {
            Method::Fg => Engine::Fg(FgState::new(x0), constant()?),
            Method::Afg => Engine::Afg(AfgState::new(x0), constant()?),
            Method::Sg => Engine::Sg(
                SgState::new(x0, SgOptions::default()),
                StepSchedule::Constant(constant()?),
            ),
            Method::Pegasos => {
                let lambda = obj.lambda();
                if lambda <= 0.0 {
                    return Err(Error::NotStronglyConvex);
                }
                let radius = (2.0 * obj.mean_loss_at_zero() / lambda).sqrt();
                Engine::Sg(
                    SgState::new(
                        x0,
                        SgOptions {
                            project_radius: Some(radius),
                            average: false,
                        },
                    ),
                    StepSchedule::Pegasos { mu: lambda },
                )
            }
            Method::Asg => Engine::Sg(
                SgState::new(
                    x0,
                    SgOptions {
                        project_radius: None,
                        average: true,
                    },
                ),
                StepSchedule::Power {
                    alpha0: constant()?,
                    n,
                },
            ),
            Method::Momentum { beta } => {
                Engine::Momentum(MomentumState::new(x0), constant()?, beta)
            }
            Method::GradAvg => Engine::GradAvg(GradAvgState::new(x0), constant()?),
            Method::SagBasic => Engine::SagBasic(SagBasicState::new(n, x0), constant()?),
            Method::Sag => Engine::Sag(SagState::new(n, x0, config.lazy), sag_step()?),
            Method::IagBasic => Engine::IagBasic(Iag::new(SagBasicState::new(n, x0)), constant()?),
            Method::Iag => Engine::Iag(Iag::new(SagState::new(n, x0, config.lazy)), sag_step()?),
        };
        Ok(engine)
    }

    fn step(
        &mut self,
        obj: &Objective,
        rng: &mut ChaCha8Rng,
        counter: &mut EvalCounter,
    ) -> Result<()> {
        let n = obj.n();
        match self {
            Engine::Fg(s, alpha) => {
                s.step(obj, *alpha, counter);
                Ok(())
            }
            Engine::Afg(s, alpha) => {
                s.step(obj, *alpha, counter);
                Ok(())
            }
            Engine::Sg(s, schedule) => s.step(obj, schedule, rng.random_range(0..n), counter),
            Engine::Momentum(s, alpha, beta) => {
                s.step(obj, *alpha, *beta, rng.random_range(0..n), counter);
                Ok(())
            }
            Engine::GradAvg(s, alpha) => {
                s.step(obj, *alpha, rng.random_range(0..n), counter);
                Ok(())
            }
            Engine::SagBasic(s, alpha) => s.step(obj, *alpha, rng.random_range(0..n), counter),
            Engine::Sag(s, rule) => s
                .step(obj, *rule, rng.random_range(0..n), counter)
                .map(|_| ()),
            Engine::IagBasic(s, alpha) => s.step(obj, *alpha, counter),
            Engine::Iag(s, rule) => s.step_with(obj, *rule, counter).map(|_| ()),
        }
    }

    fn current(&mut self) -> &[f64] {
        match self {
            Engine::Fg(s, _) => s.x(),
            Engine::Afg(s, _) => s.x(),
            Engine::Sg(s, _) => s.average().unwrap_or(s.x()),
            Engine::Momentum(s, ..) => s.x(),
            Engine::GradAvg(s, _) => s.x(),
            Engine::SagBasic(s, _) => s.x(),
            Engine::Sag(s, _) => s.x(),
            Engine::IagBasic(s, _) => s.current(),
            Engine::Iag(s, _) => s.current(),
        }
    }

    fn lipschitz_estimate(&self) -> Option<f64> {
        match self {
            Engine::Sag(s, SagStep::LineSearch) => Some(s.lipschitz_estimate()),
            Engine::Iag(s, SagStep::LineSearch) => Some(s.inner().lipschitz_estimate()),
            _ => None,
        }
    }
}

/// Runs `config.method` for `config.passes` effective passes, calling
/// `observer` at pass 0 and after every completed pass.
///
/// Components are drawn uniformly with replacement from a ChaCha8 stream seeded
/// with `config.seed`. A pass is complete once the evaluation work reaches
/// `pass · n` component-gradient units. A non-finite iterate ends the run after
/// its checkpoint is reported.
pub fn run_optimizer<F>(
    obj: &Objective,
    config: &OptimizerConfig,
    mut observer: F,
) -> Result<RunStats>
where
    F: FnMut(&Checkpoint<'_>),
{
    let n = obj.n();
    let mut engine = Engine::build(obj, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counter = EvalCounter::default();
    let mut steps = 0u64;
    let mut diverged = false;

    observer(&Checkpoint {
        pass: 0,
        x: engine.current(),
        counter,
    });
    for pass in 1..=config.passes {
        let target = pass * n as u64;
        while counter.work_units(n) < target {
            engine.step(obj, &mut rng, &mut counter)?;
            steps += 1;
        }
        let x = engine.current();
        diverged = !linalg::all_finite(x);
        observer(&Checkpoint { pass, x, counter });
        if diverged {
            break;
        }
    }
    Ok(RunStats {
        counter,
        steps,
        diverged,
        lipschitz_estimate: engine.lipschitz_estimate(),
        x: engine.current().to_vec(),
    })
}
