use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sag_core::experiment::{
    emit_csv, grid_candidates, grid_search_on, run_on, DataSource, GridKind, Lambda, MetricsRow,
    Problem, RunConfig,
};
use sag_core::theory::checks::{
    check_contraction, check_domination, check_expected_quadratic, check_prop1, check_prop2,
    check_sgd_phase, large_step_instance, small_step_instance, BoundReport, PROP_PASSES,
};
use sag_core::{Error, Loss, Method, StepRule, SyntheticSpec};

const THREADS_ENV: &str = "SAG_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Ok = 0,
    Config = 1,
    Diverged = 2,
    BoundFailed = 3,
}

impl From<Outcome> for ExitCode {
    fn from(o: Outcome) -> Self {
        ExitCode::from(o as u8)
    }
}

#[derive(Parser)]
#[command(
    name = "sag",
    version,
    about = "Stochastic average gradient experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method and write per-pass metrics as CSV.
    Run(RunArgs),
    /// Grid-search a constant step size and write every trace as CSV.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "powers10")]
        grid: GridKind,
        /// Grid centre; defaults to 1/L of the training objective.
        #[arg(long)]
        base: Option<f64>,
    },
    /// Empirically check a convergence bound or the Lyapunov inequalities.
    CheckBounds {
        #[arg(long, value_parser = ["1", "2", "sgd", "lyapunov"])]
        prop: String,
        /// Seeds for the bound sweeps, random cases for the Lyapunov checks.
        #[arg(long)]
        seeds: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// LIBSVM-format dataset, split in half into train and test.
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    data: Option<PathBuf>,
    /// Synthetic dataset as `n,p,density,seed`.
    #[arg(long)]
    synthetic: Option<SyntheticSpec>,
    #[arg(long, default_value = "logistic")]
    loss: Loss,
    /// Regularization strength, or `1/n`.
    #[arg(long, default_value = "1/n")]
    lambda: Lambda,
    #[arg(long, default_value = "sag")]
    method: Method,
    /// Step rule: a number, `c/L`, `sag`, `small`, `large` or `linesearch`.
    #[arg(long, default_value = "sag")]
    step: StepRule,
    #[arg(long, default_value_t = 30)]
    passes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable just-in-time sparse updates.
    #[arg(long)]
    dense: bool,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let source = match (&self.data, self.synthetic) {
            (Some(path), _) => DataSource::File(path.clone()),
            (None, Some(spec)) => DataSource::Synthetic(spec),
            (None, None) => unreachable!("clap requires a data source"),
        };
        RunConfig {
            method: self.method,
            step: self.step,
            loss: self.loss,
            lambda: self.lambda,
            passes: self.passes,
            seed: self.seed,
            source,
            lazy: !self.dense,
        }
    }

    fn write(&self, rows: &[MetricsRow]) -> Result<(), Error> {
        let text = emit_csv(rows);
        match &self.out {
            Some(path) => {
                fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

fn outcome_of(e: &Error) -> Outcome {
    match e {
        Error::AllCandidatesDiverged | Error::LineSearchDiverged(_) => Outcome::Diverged,
        _ => Outcome::Config,
    }
}

fn run(args: &RunArgs) -> Result<Outcome, Error> {
    let config = args.config();
    let problem = Problem::prepare(&config)?;
    let exp = run_on(&problem, &config)?;
    args.write(&exp.rows)?;
    if exp.diverged {
        eprintln!("{}: diverged", config.method);
        return Ok(Outcome::Diverged);
    }
    Ok(Outcome::Ok)
}

fn grid(args: &RunArgs, kind: GridKind, base: Option<f64>) -> Result<Outcome, Error> {
    let config = args.config();
    if config.method.has_builtin_schedule() {
        return Err(Error::InvalidParameter(format!(
            "{} has a built-in step schedule; nothing to search",
            config.method
        )));
    }
    let problem = Problem::prepare(&config)?;
    let base = base.unwrap_or_else(|| 1.0 / problem.train.constants().lipschitz);
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid base must be positive, got {base}"
        )));
    }
    let result = grid_search_on(&problem, &config, &grid_candidates(kind, base))?;
    let rows: Vec<MetricsRow> = result
        .traces
        .iter()
        .flat_map(|(_, e)| e.rows.iter().cloned())
        .collect();
    args.write(&rows)?;
    eprintln!("best step: {:e}", result.best_step);
    Ok(Outcome::Ok)
}

fn report_bound(report: &BoundReport) -> Outcome {
    for row in &report.rows {
        let mark = if row.holds() { "" } else { "  VIOLATION" };
        println!(
            "k={:<8} empirical={:.6e} bound={:.6e}{mark}",
            row.k, row.empirical, row.bound
        );
    }
    println!(
        "{}: {} seeds, {} violations, worst ratio {:.4}",
        report.name,
        report.seeds,
        report.violations(),
        report.worst_ratio()
    );
    if report.passed() {
        Outcome::Ok
    } else {
        Outcome::BoundFailed
    }
}

fn check_bounds(prop: &str, seeds: Option<u64>) -> Result<Outcome, Error> {
    let outcome = match prop {
        "1" => report_bound(&check_prop1(
            &small_step_instance()?,
            seeds.unwrap_or(100),
            PROP_PASSES,
        )?),
        "2" => report_bound(&check_prop2(
            &large_step_instance()?,
            seeds.unwrap_or(100),
            PROP_PASSES,
        )?),
        "sgd" => report_bound(&check_sgd_phase(
            &small_step_instance()?,
            seeds.unwrap_or(200),
        )?),
        "lyapunov" => {
            let c = check_contraction(seeds.unwrap_or(200), 0)?;
            println!(
                "contraction: small {}/{} failed, large {}/{} failed, worst excess {:.3e}",
                c.small_failures, c.small_cases, c.large_failures, c.large_cases, c.worst_excess
            );
            let l = check_expected_quadratic(seeds.unwrap_or(100), 1)?;
            println!(
                "expected quadratic: {} cases, max relative error {:.3e}",
                l.cases, l.max_relative_error
            );
            let d = check_domination(seeds.unwrap_or(500), 2)?;
            println!(
                "domination: small {}/{} violated, large {}/{} violated",
                d.small_violations, d.small_cases, d.large_violations, d.large_cases
            );
            if c.passed() && l.passed() && d.passed() {
                Outcome::Ok
            } else {
                Outcome::BoundFailed
            }
        }
        other => unreachable!("clap restricts --prop, got {other}"),
    };
    Ok(outcome)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                Outcome::Config
            } else {
                Outcome::Ok
            };
            let _ = e.print();
            return code.into();
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(args) => run(args),
        Command::Grid {
            run,
            grid: kind,
            base,
        } => grid(run, *kind, *base),
        Command::CheckBounds { prop, seeds } => check_bounds(prop, *seeds),
    });
    match result {
        Ok(o) => o.into(),
        Err(e) => {
            eprintln!("error: {e}");
            outcome_of(&e).into()
        }
    }
}
