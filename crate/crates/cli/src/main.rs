//! `vropt`: reference solving, single runs, method comparisons, 2-D
//! iterate dumps and the validation suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod experiment;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vropt_core::optim::TableMode;
use vropt_core::schedule::Sampling;
use vropt_core::{JitMode, LossKind, Method, StopRule};

use crate::setup::{GammaPolicy, InnerT, MethodSpec, ProblemSpec};

#[derive(Debug, Parser)]
#[command(name = "vropt", version, about = "Variance-reduced stochastic gradient methods for GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the problem to high accuracy and write x* and f*.
    SolveRef(SolveRefArgs),
    /// Run one method and write its trace CSV.
    Run(RunArgs),
    /// Run every method of an experiment file and summarize.
    Compare(CompareArgs),
    /// Dump every iterate of a run on a 2-D problem, plus an objective grid.
    Trace2d(Trace2dArgs),
    /// Run the built-in validation checks and print a CSV report.
    Validate(ValidateArgs),
}

fn parse_with<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Dataset in LIBSVM format.
    #[arg(long)]
    data: PathBuf,
    /// Feature dimension (defaults to the largest index in the file).
    #[arg(long)]
    dim: Option<usize>,
    /// half_squared, logistic or hinge.
    #[arg(long, default_value = "logistic", value_parser = parse_with::<LossKind>)]
    loss: LossKind,
    /// L2 weight; defaults to 1/n.
    #[arg(long)]
    l2: Option<f64>,
    /// L1 weight, applied through the proximal operator.
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
}

impl ProblemArgs {
    fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            data: self.data.clone(),
            dim: self.dim,
            loss: self.loss,
            l2: self.l2,
            l1: self.l1,
        }
    }
}

#[derive(Debug, Args)]
struct MethodArgs {
    /// gd, sgd, sgd_momentum, sgd_star, sag, saga, svrg, sarah or sdca.
    #[arg(long, value_parser = parse_with::<Method>)]
    method: Method,
    /// Constant stepsize (or the largest trial stepsize with --gamma-policy armijo).
    #[arg(long)]
    gamma: Option<f64>,
    /// theory, minibatch or armijo.
    #[arg(long, default_value = "theory", value_parser = parse_with::<GammaPolicy>)]
    gamma_policy: GammaPolicy,
    /// Momentum parameter of sgd_momentum.
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// uniform or lipschitz.
    #[arg(long, default_value = "uniform", value_parser = parse_with::<Sampling>)]
    sampling: Sampling,
    /// Inner-loop length of svrg and sarah: a step count or `n`.
    #[arg(long, value_parser = parse_with::<InnerT>)]
    inner_t: Option<InnerT>,
    #[arg(long, default_value_t = 30.0)]
    epochs: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint cadence in epochs.
    #[arg(long, default_value_t = 1.0)]
    checkpoint_every: f64,
    /// auto, on or off.
    #[arg(long, default_value = "auto", value_parser = parse_with::<JitMode>)]
    jit: JitMode,
    /// dense or scalar gradient memory for sag and saga.
    #[arg(long, default_value = "scalar", value_parser = parse_with::<TableMode>)]
    table: TableMode,
    #[arg(long, default_value_t = 0)]
    warm_start_sgd_epochs: usize,
    /// grad:ε, gbar:ε, gap:ε or epochs; may be repeated.
    #[arg(long, value_parser = parse_with::<StopRule>)]
    stop: Vec<StopRule>,
    /// Record wall-clock time per checkpoint (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

impl MethodArgs {
    fn spec(&self) -> MethodSpec {
        MethodSpec {
            method: self.method,
            gamma: self.gamma,
            gamma_policy: self.gamma_policy,
            beta: self.beta,
            batch: self.batch,
            sampling: self.sampling,
            inner_t: self.inner_t,
            epochs: self.epochs,
            checkpoint_every: self.checkpoint_every,
            jit: self.jit,
            table: self.table,
            warm_start_sgd_epochs: self.warm_start_sgd_epochs,
            stop: self.stop.clone(),
            timing: self.timing,
        }
    }
}

#[derive(Debug, Args)]
struct SolveRefArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Target stationarity residual.
    #[arg(long, default_value_t = vropt_core::diag::DEFAULT_REFERENCE_TOL)]
    tol: f64,
    /// Also write <out>.xstar and <out>.fstar.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Reference solution vector file.
    #[arg(long)]
    xstar: Option<PathBuf>,
    /// Optimal value, or a file written by solve-ref.
    #[arg(long)]
    fstar: Option<String>,
    /// Trace CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Experiment file.
    spec: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct Trace2dArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Output directory for iterates.csv, grid.csv and trace.csv.
    #[arg(long)]
    out: PathBuf,
    /// Grid points per axis.
    #[arg(long, default_value_t = 101)]
    grid: usize,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Run a single check group.
    #[arg(long)]
    only: Option<String>,
    /// Directory holding the bundled datasets.
    #[arg(long, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))]
    data_dir: PathBuf,
    /// Deliberately break a component to exercise the checks (saga-sign-flip).
    #[arg(long)]
    inject_fault: Option<String>,
    /// Also write the CSV report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::SolveRef(a) => commands::solve_ref(&a.problem.spec(), a.tol, a.out.as_deref()),
        Command::Run(a) => commands::run(
            &a.problem.spec(),
            &a.method.spec(),
            a.method.seed,
            a.xstar.as_deref(),
            a.fstar.as_deref(),
            a.out.as_deref(),
        ),
        Command::Compare(a) => commands::compare(&a.spec, a.jobs),
        Command::Trace2d(a) => {
            commands::trace2d(&a.problem.spec(), &a.method.spec(), a.method.seed, &a.out, a.grid)
        }
        Command::Validate(a) => commands::validate(
            a.only.as_deref(),
            &a.data_dir,
            a.inject_fault.as_deref(),
            a.report.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vropt: {e}");
            e.exit_code()
        }
    }
}
