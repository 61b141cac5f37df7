//! Batch front-end for the ultraharnack verification suites.
//!
//! Exit status: 0 when every check passes, 1 when violations were found
//! (listed in the report), 2 on usage or input errors.

mod commands;
mod report;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use ultraharnack::harnack::DEFAULT_TOL;

/// Input or usage problem; reported on one line with exit status 2.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Comma-separated list of finite numbers, e.g. `0.5,-1,2`.
#[derive(Debug, Clone)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values = s
            .split(',')
            .map(|part| {
                let v: f64 = part.trim().parse().map_err(|_| format!("`{}` is not a number", part.trim()))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("`{}` is not finite", part.trim()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(List(values))
    }
}

/// Comma-separated list of positive integers, e.g. `41,81,161`.
#[derive(Debug, Clone)]
pub struct Counts(pub Vec<usize>);

impl FromStr for Counts {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|part| part.trim().parse::<usize>().map_err(|_| format!("`{}` is not a count", part.trim())))
            .collect::<Result<Vec<_>, _>>()
            .map(Counts)
    }
}

#[derive(Parser)]
#[command(name = "ultraharnack", version, about = "Matrix Harnack verification suites for Kolmogorov-type equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Output {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit timestamps and runtimes so reruns are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Args, Clone)]
pub struct ProblemArgs {
    /// Number of diffusive variables.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of transported variables.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Clone)]
pub struct Sampling {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative eigenvalue tolerance.
    #[arg(long, env = "ULTRAHARNACK_TOL", default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Points are drawn from `[-x_box, x_box]^N`.
    #[arg(long, default_value_t = 5.0)]
    pub x_box: f64,
    #[arg(long, default_value_t = 0.05)]
    pub t_lo: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_hi: f64,
    /// Largest n when drawing random problems (used without --n/--mixture).
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel (or mixture) value and log-jets at one point.
    KernelEval {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Mixture JSON; evaluates the mixture instead of a single kernel.
        #[arg(long)]
        mixture: Option<PathBuf>,
        #[arg(long)]
        x: List,
        #[arg(long)]
        t: f64,
        /// Pole position (default: origin).
        #[arg(long)]
        xi: Option<List>,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep the matrix Harnack inequality over random samples.
    CheckHarnack {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        mixture: Option<PathBuf>,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep the trace and diagonal consequences of the matrix inequality.
    TraceCheck {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        mixture: Option<PathBuf>,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        output: Output,
    },
    /// Two-point Harnack bound between (p, t1) and (q, t2).
    TwoPoint {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Mixture JSON (default: the fundamental solution with pole at the origin).
        #[arg(long)]
        mixture: Option<PathBuf>,
        #[arg(long)]
        p: List,
        #[arg(long)]
        q: List,
        #[arg(long)]
        t1: f64,
        #[arg(long)]
        t2: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Optimal path, its action, and the discretized-minimum comparison.
    Path {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        p: List,
        #[arg(long)]
        q: List,
        #[arg(long)]
        t1: f64,
        #[arg(long)]
        t2: f64,
        /// Cells of the discretized problem.
        #[arg(long, default_value_t = 1024)]
        steps: usize,
        /// Largest accepted relative gap between the two actions.
        #[arg(long, default_value_t = 1e-6)]
        gap_tol: f64,
        /// Write `t,x1,..,xN` samples of the optimal path here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        csv_points: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Numerical checks of the proof's algebra.
    Ledger {
        #[arg(long, default_value_t = 64)]
        sigma_grid: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Search for counterexamples to the matrix inequality for a general operator.
    ConjectureScan {
        /// Operator JSON with fields p, A0, B.
        #[arg(long)]
        operator: Option<PathBuf>,
        /// Dimension profile for a random operator, e.g. 2,1,1.
        #[arg(long, conflicts_with = "operator")]
        profile: Option<Counts>,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "ULTRAHARNACK_TOL", default_value_t = ultraharnack::general_op::SCAN_TOL)]
        tol: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Finite-difference convergence benchmark against the exact kernel.
    FdBench {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 6.0)]
        half_width: f64,
        #[arg(long, default_value = "41,81,161")]
        ladder: Counts,
        #[arg(long, default_value_t = 0.5)]
        t0: f64,
        #[arg(long, default_value_t = 1.0)]
        t1: f64,
        /// Time of the kernel's pole (its centre is the origin).
        #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
        pole_time: f64,
        #[arg(long, default_value_t = 0.8)]
        min_order: f64,
        /// Write a CSV slice of the finest final field here.
        #[arg(long)]
        field_csv: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
}

fn run(command: Command, started: Instant) -> Result<bool, Failure> {
    use commands::*;
    match command {
        Command::KernelEval { problem, mixture, x, t, xi, tau, output } => {
            kernel_eval(&problem, mixture.as_deref(), &x, t, xi.as_ref(), tau, &sink(output, started))
        }
        Command::CheckHarnack { problem, mixture, sampling, output } => {
            check_harnack(&problem, mixture.as_deref(), &sampling, &sink(output, started))
        }
        Command::TraceCheck { problem, mixture, sampling, output } => {
            trace_check(&problem, mixture.as_deref(), &sampling, &sink(output, started))
        }
        Command::TwoPoint { problem, mixture, p, q, t1, t2, output } => {
            two_point(&problem, mixture.as_deref(), &p, &q, t1, t2, &sink(output, started))
        }
        Command::Path { problem, p, q, t1, t2, steps, gap_tol, csv, csv_points, output } => {
            path(&PathArgs { problem, p, q, t1, t2, steps, gap_tol, csv, csv_points }, &sink(output, started))
        }
        Command::Ledger { sigma_grid, trials, seed, output } => {
            ledger(sigma_grid, trials, seed, &sink(output, started))
        }
        Command::ConjectureScan { operator, profile, problem, samples, seed, tol, output } => {
            conjecture_scan(&ScanArgs { operator, profile, problem, samples, seed, tol }, &sink(output, started))
        }
        Command::FdBench { n, k, half_width, ladder, t0, t1, pole_time, min_order, field_csv, output } => fd_bench(
            &BenchArgs { n, k, half_width, ladder, t0, t1, pole_time, min_order, field_csv },
            &sink(output, started),
        ),
    }
}

fn sink(output: Output, started: Instant) -> report::Sink {
    report::Sink { out: output.out, deterministic: output.deterministic, started }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command, started) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
