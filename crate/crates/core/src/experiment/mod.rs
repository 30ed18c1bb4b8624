//! The benchmark protocol: prepare a train/test problem, run an optimizer for
//! a number of effective passes, and record objective and error metrics after
//! every pass.

mod csv;

pub use csv::{emit_csv, parse_csv, CSV_HEADER};

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::data::{Dataset, Preprocessor, Standardize};
use crate::error::{Error, Result};
use crate::objective::{Loss, Objective};
use crate::optim::{run_optimizer, Method, OptimizerConfig, RunStats, StepRule};
use crate::synthetic::SyntheticSpec;
use crate::theory::reference::{reference_solution, Reference, DEFAULT_TOLERANCE};

/// Seed of the train/test split applied to dataset files.
pub const SPLIT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Value(f64),
    /// `1/n` for the training set size `n`.
    InverseN,
}

impl Lambda {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            Lambda::Value(v) => v,
            Lambda::InverseN => 1.0 / n as f64,
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Value(v) => write!(f, "{v}"),
            Lambda::InverseN => f.write_str("1/n"),
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("1/n") {
            return Ok(Lambda::InverseN);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(Lambda::Value(v)),
            _ => Err(Error::InvalidParameter(format!(
                "lambda must be a nonnegative number or 1/n, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A LIBSVM file, split in half (seeded) into train and test.
    File(PathBuf),
    /// Train and test sets drawn from a planted model.
    Synthetic(SyntheticSpec),
    /// Used as given: no split, standardization or bias.
    Prepared {
        train: Arc<Dataset>,
        test: Option<Arc<Dataset>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub step: StepRule,
    pub loss: Loss,
    pub lambda: Lambda,
    pub passes: u64,
    pub seed: u64,
    pub source: DataSource,
    pub lazy: bool,
}

/// One record per method, step, seed and effective pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub step: String,
    pub seed: u64,
    pub effective_pass: f64,
    pub train_obj: f64,
    pub train_gap: f64,
    pub test_obj: f64,
    pub test_error: f64,
}

/// Training objective (with its optimum) and optional test objective.
#[derive(Debug, Clone)]
pub struct Problem {
    pub train: Objective,
    pub test: Option<Objective>,
    pub reference: Arc<Reference>,
}

impl Problem {
    pub fn prepare(config: &RunConfig) -> Result<Self> {
        let (train, test) = load(&config.source, config.loss)?;
        let lambda = config.lambda.resolve(train.n());
        let train = Objective::new(train, config.loss, lambda)?;
        let test = test
            .map(|t| Objective::new(t, config.loss, lambda))
            .transpose()?;
        let reference = cached_reference(&train)?;
        Ok(Self {
            train,
            test,
            reference,
        })
    }
}

fn load(source: &DataSource, loss: Loss) -> Result<(Arc<Dataset>, Option<Arc<Dataset>>)> {
    let (train, test) = match source {
        DataSource::Prepared { train, test } => return Ok((train.clone(), test.clone())),
        DataSource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let mut data = Dataset::parse_libsvm(&text)?;
            if loss == Loss::Logistic {
                data = data.into_binary_labels()?;
            }
            data.split_half(SPLIT_SEED)?
        }
        DataSource::Synthetic(spec) => spec.generate(loss)?,
    };
    let prep = Preprocessor::fit(&train, Standardize::IfDense);
    Ok((
        Arc::new(prep.transform(&train)?),
        Some(Arc::new(prep.transform(&test)?)),
    ))
}

type CacheKey = (u64, u64, Loss);

fn reference_cache() -> &'static Mutex<HashMap<CacheKey, Arc<Reference>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Reference>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Reference solution keyed by dataset content, `λ` and loss.
pub fn cached_reference(obj: &Objective) -> Result<Arc<Reference>> {
    let key = (
        obj.data().content_hash(),
        obj.lambda().to_bits(),
        obj.loss(),
    );
    if let Some(r) = reference_cache().lock().expect("cache lock").get(&key) {
        return Ok(r.clone());
    }
    let r = Arc::new(reference_solution(obj, DEFAULT_TOLERANCE)?);
    reference_cache()
        .lock()
        .expect("cache lock")
        .insert(key, r.clone());
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub rows: Vec<MetricsRow>,
    /// The iterate or the training objective became non-finite.
    pub diverged: bool,
    pub stats: RunStats,
}

impl Experiment {
    pub fn final_train_obj(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.train_obj)
    }
}

pub fn run_experiment(config: &RunConfig) -> Result<Experiment> {
    let problem = Problem::prepare(config)?;
    run_on(&problem, config)
}

/// Runs `config` against an already prepared problem. Rows stop at the first
/// non-finite training objective.
pub fn run_on(problem: &Problem, config: &RunConfig) -> Result<Experiment> {
    let opt = OptimizerConfig {
        method: config.method,
        step: config.step,
        passes: config.passes,
        seed: config.seed,
        lazy: config.lazy,
        x0: None,
    };
    let method = config.method.to_string();
    let step = if config.method.has_builtin_schedule() {
        "1/(mu*k)".to_string()
    } else {
        config.step.to_string()
    };
    let g_star = problem.reference.value;
    let mut rows = Vec::with_capacity(config.passes as usize + 1);
    let mut stopped = false;
    let stats = run_optimizer(&problem.train, &opt, |c| {
        if stopped {
            return;
        }
        let train_obj = problem.train.value(c.x);
        let (test_obj, test_error) = match &problem.test {
            Some(t) => (t.value(c.x), t.classification_error(c.x)),
            None => (f64::NAN, f64::NAN),
        };
        rows.push(MetricsRow {
            method: method.clone(),
            step: step.clone(),
            seed: config.seed,
            effective_pass: c.pass as f64,
            train_obj,
            train_gap: train_obj - g_star,
            test_obj,
            test_error,
        });
        stopped = !train_obj.is_finite();
    })?;
    Ok(Experiment {
        diverged: stats.diverged || stopped,
        rows,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// `base · 10^k`, `k = −3..=3`
    Powers10,
    /// `base · 2^k`, `k = −6..=6`
    Powers2,
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "powers10" => Ok(GridKind::Powers10),
            "powers2" => Ok(GridKind::Powers2),
            other => Err(Error::InvalidParameter(format!("unknown grid {other:?}"))),
        }
    }
}

pub fn grid_candidates(kind: GridKind, base: f64) -> Vec<f64> {
    match kind {
        GridKind::Powers10 => (-3..=3).map(|k| base * 10f64.powi(k)).collect(),
        GridKind::Powers2 => (-6..=6).map(|k| base * 2f64.powi(k)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_step: f64,
    pub best_index: usize,
    /// One experiment per candidate, in grid order.
    pub traces: Vec<(f64, Experiment)>,
}

/// Runs `template` once per constant step in `grid` and picks the step with
/// the lowest final training objective. Diverged runs rank last and ties go
/// to the smaller step.
pub fn grid_search_step(template: &RunConfig, grid: &[f64]) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty step-size grid".into()));
    }
    let problem = Problem::prepare(template)?;
    grid_search_on(&problem, template, grid)
}

pub fn grid_search_on(problem: &Problem, template: &RunConfig, grid: &[f64]) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty step-size grid".into()));
    }
    let traces: Vec<(f64, Experiment)> = grid
        .par_iter()
        .map(|&alpha| {
            let config = RunConfig {
                step: StepRule::Constant(alpha),
                ..template.clone()
            };
            let outcome = match run_on(problem, &config) {
                Ok(e) => e,
                // a step too large for the method counts as a divergent candidate
                Err(Error::StepTooLarge(_) | Error::LineSearchDiverged(_)) => Experiment {
                    rows: Vec::new(),
                    diverged: true,
                    stats: RunStats {
                        counter: Default::default(),
                        steps: 0,
                        diverged: true,
                        x: Vec::new(),
                        lipschitz_estimate: None,
                    },
                },
                Err(e) => return Err(e),
            };
            Ok((alpha, outcome))
        })
        .collect::<Result<_>>()?;

    let score = |e: &Experiment| {
        let f = e.final_train_obj();
        if e.diverged || !f.is_finite() {
            None
        } else {
            Some(f)
        }
    };
    let best_index = (0..traces.len())
        .filter_map(|i| score(&traces[i].1).map(|f| (i, f)))
        .min_by(|(i, f), (j, g)| f.total_cmp(g).then(traces[*i].0.total_cmp(&traces[*j].0)))
        .map(|(i, _)| i)
        .ok_or(Error::AllCandidatesDiverged)?;
    Ok(GridResult {
        best_step: traces[best_index].0,
        best_index,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_source() -> DataSource {
        let data = Dataset::from_dense_rows(&[vec![1.0], vec![1.0]], &[0.0, 2.0]).unwrap();
        DataSource::Prepared {
            train: Arc::new(data),
            test: None,
        }
    }

    fn toy_config(method: Method, step: StepRule, passes: u64) -> RunConfig {
        RunConfig {
            method,
            step,
            loss: Loss::Squared,
            lambda: Lambda::Value(0.0),
            passes,
            seed: 0,
            source: toy_source(),
            lazy: true,
        }
    }

    fn synthetic_config(method: Method, step: StepRule, passes: u64) -> RunConfig {
        RunConfig {
            method,
            step,
            loss: Loss::Logistic,
            lambda: Lambda::InverseN,
            passes,
            seed: 3,
            source: DataSource::Synthetic(SyntheticSpec::new(200, 8, 1.0, 1)),
            lazy: true,
        }
    }

    #[test]
    fn zero_passes_single_row() {
        let e = run_experiment(&toy_config(Method::Sag, StepRule::Constant(0.5), 0)).unwrap();
        assert_eq!(e.rows.len(), 1);
        assert_eq!(e.rows[0].effective_pass, 0.0);
        assert_eq!(e.rows[0].train_obj, 1.0);
        assert_eq!(e.rows[0].train_gap, 0.5);
    }

    #[test]
    fn sag_converges_on_toy() {
        // the toy's true strong convexity is 1, so 2/(L + nμ) = 2/3
        let e =
            run_experiment(&toy_config(Method::Sag, StepRule::Constant(2.0 / 3.0), 30)).unwrap();
        assert_eq!(e.rows.len(), 31);
        assert!(e.rows.last().unwrap().train_gap < 1e-8);
    }

    #[test]
    fn sag_with_inverse_lipschitz_step_converges() {
        // no guarantee exists for this step; a loose sanity check only
        let cfg = RunConfig {
            source: DataSource::Synthetic(SyntheticSpec::new(300, 10, 0.3, 1)),
            ..synthetic_config(Method::Sag, StepRule::InverseLipschitz(1.0), 30)
        };
        let e = run_experiment(&cfg).unwrap();
        let (first, last) = (e.rows[0].train_gap, e.rows[30].train_gap);
        assert!(last < 1e-6 * first, "{first} -> {last}");
    }

    #[test]
    fn identical_configs_identical_csv() {
        let cfg = synthetic_config(Method::Sag, StepRule::SagDefault, 3);
        let a = emit_csv(&run_experiment(&cfg).unwrap().rows);
        let b = emit_csv(&run_experiment(&cfg).unwrap().rows);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 5);
    }

    #[test]
    fn rows_are_well_formed() {
        let e = run_experiment(&synthetic_config(
            Method::Sg,
            StepRule::InverseLipschitz(0.1),
            4,
        ))
        .unwrap();
        for (k, r) in e.rows.iter().enumerate() {
            assert_eq!(r.effective_pass, k as f64);
            assert!((0.0..=1.0).contains(&r.test_error));
            assert!(r.train_gap >= -1e-12);
        }
    }

    #[test]
    fn divergence_is_contained() {
        let e = run_experiment(&toy_config(Method::Fg, StepRule::Constant(1e100), 30)).unwrap();
        assert!(e.diverged);
        assert!(!e.final_train_obj().is_finite());
        assert!(e.rows.len() < 31);
    }

    #[test]
    fn grid_search_on_toy() {
        let cfg = toy_config(Method::Fg, StepRule::Constant(1.0), 20);
        let grid = [1e-2, 1e-1, 1.0, 10.0, 1e200];
        let r = grid_search_step(&cfg, &grid).unwrap();
        assert_eq!(r.best_step, 1.0);
        assert!(!r.traces[3].1.diverged && r.traces[4].1.diverged);

        assert_eq!(grid_search_step(&cfg, &[0.3]).unwrap().best_step, 0.3);
        // α = 0.5 and α = 1.5 contract by the same factor
        let tie = grid_search_step(&cfg, &[1.5, 0.5]).unwrap();
        assert_eq!(tie.best_step, 0.5);
        assert_eq!(
            grid_search_step(&cfg, &[1e200, 1e250]),
            Err(Error::AllCandidatesDiverged)
        );
    }

    #[test]
    fn grids() {
        let g = grid_candidates(GridKind::Powers10, 2.0);
        assert_eq!(g.len(), 7);
        assert_eq!(g[3], 2.0);
        assert_eq!(grid_candidates(GridKind::Powers2, 1.0)[0], 1.0 / 64.0);
    }

    #[test]
    fn lambda_parsing() {
        assert_eq!("1/n".parse::<Lambda>().unwrap(), Lambda::InverseN);
        assert_eq!("0.25".parse::<Lambda>().unwrap(), Lambda::Value(0.25));
        assert!("-1".parse::<Lambda>().is_err());
        assert_eq!(Lambda::InverseN.resolve(4), 0.25);
    }

    #[test]
    fn file_source_splits_and_standardizes() {
        let dir = std::env::temp_dir().join(format!("sag-exp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.svm");
        std::fs::write(&path, "1 1:1 2:3\n0 1:2 2:1\n1 1:3 2:2\n0 1:4 2:5\n").unwrap();
        let cfg = RunConfig {
            source: DataSource::File(path),
            ..synthetic_config(Method::Fg, StepRule::Constant(0.1), 1)
        };
        let problem = Problem::prepare(&cfg).unwrap();
        assert_eq!(problem.train.n(), 2);
        assert_eq!(problem.train.dim(), 3);
        assert_eq!(problem.train.lambda(), 0.5);
        for i in 0..2 {
            assert_eq!(problem.train.features(i).to_dense()[2], 1.0);
            assert!(problem.train.label(i).abs() == 1.0);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let cfg = RunConfig {
            source: DataSource::File("/nonexistent/data.svm".into()),
            ..synthetic_config(Method::Fg, StepRule::Constant(0.1), 1)
        };
        assert!(matches!(run_experiment(&cfg), Err(Error::Io(_))));
    }
}
