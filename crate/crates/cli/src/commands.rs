//! One function per subcommand. Each returns whether every check passed.

use nalgebra::DVector;
use serde::Serialize;
use std::path::{Path, PathBuf};

use ultraharnack::fd_solver::{convergence_study, csv_slice, kernel_value, solve, Grid};
use ultraharnack::general_op::{self, OperatorSpec, ScanConfig, ScanReport};
use ultraharnack::harnack::{
    sweep_fixed, sweep_problem, sweep_random, two_point_check, SampleOutcome, SweepConfig, SweepReport, TwoPointCheck,
};
use ultraharnack::kernel::{log_kernel_jet, pde_residual_relative};
use ultraharnack::ledger::{run_ledger, LedgerConfig, LedgerReport};
use ultraharnack::path::{minimize_action_numeric, optimal_path};
use ultraharnack::sampling::{self, MixtureSampler};
use ultraharnack::{Component, MixtureSolution, Pole, Problem, SpaceTimePoint};

use crate::report::{rows, write_file, Sink};
use crate::{Counts, Failure, List, ProblemArgs, Sampling};

fn fail<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(msg.into()))
}

fn load_mixture(path: &Path) -> Result<MixtureSolution, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))?;
    MixtureSolution::from_json(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

/// `(n, k)` from the flags, checked against the mixture when both are given.
fn resolve_problem(args: &ProblemArgs, mixture: Option<&MixtureSolution>) -> Result<Option<Problem>, Failure> {
    let flags = match (args.n, args.k) {
        (Some(n), Some(k)) => Some(Problem::new(n, k)?),
        (None, None) => None,
        _ => return fail("give both --n and --k"),
    };
    match (flags, mixture) {
        (Some(p), Some(m)) if p != *m.problem() => fail(format!(
            "--n {} --k {} does not match the mixture's n = {}, k = {}",
            p.n(),
            p.k(),
            m.problem().n(),
            m.problem().k()
        )),
        (Some(p), _) => Ok(Some(p)),
        (None, m) => Ok(m.map(|m| *m.problem())),
    }
}

fn require_problem(args: &ProblemArgs) -> Result<Problem, Failure> {
    resolve_problem(args, None)?.ok_or_else(|| Failure("--n and --k are required".into()))
}

fn fundamental(problem: Problem) -> Result<MixtureSolution, Failure> {
    Ok(MixtureSolution::new(problem, vec![Component::new(1.0, Pole::origin(&problem))], 0.0)?)
}

fn check_tol(tol: f64) -> Result<(), Failure> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        fail(format!("tolerance must be positive and finite, got {tol}"))
    }
}

fn vector(list: &List, what: &str, problem: &Problem) -> Result<DVector<f64>, Failure> {
    if list.0.len() != problem.dim() {
        return fail(format!("--{what} needs {} coordinates, got {}", problem.dim(), list.0.len()));
    }
    Ok(DVector::from_vec(list.0.clone()))
}

#[derive(Serialize)]
struct KernelEvalReport {
    problem: Problem,
    x: Vec<f64>,
    t: f64,
    value: f64,
    log_value: f64,
    grad_log: Vec<f64>,
    hess_log: Vec<Vec<f64>>,
    /// Relative residual of the equation at the point.
    pde_residual: f64,
}

pub fn kernel_eval(
    args: &ProblemArgs,
    mixture: Option<&Path>,
    x: &List,
    t: f64,
    xi: Option<&List>,
    tau: f64,
    sink: &Sink,
) -> Result<bool, Failure> {
    let sol = mixture.map(load_mixture).transpose()?;
    let problem = resolve_problem(args, sol.as_ref())?.ok_or_else(|| Failure("give --n/--k or --mixture".into()))?;
    let x = vector(x, "x", &problem)?;
    let point = SpaceTimePoint { x: x.clone(), t };
    let report = match &sol {
        Some(sol) => {
            if xi.is_some() {
                return fail("--xi applies to single kernels, not mixtures");
            }
            let jet = sol.solution_jet(&point)?;
            KernelEvalReport {
                problem,
                x: x.iter().copied().collect(),
                t,
                value: jet.u,
                log_value: jet.log_u,
                grad_log: jet.grad_log.iter().copied().collect(),
                hess_log: rows(&jet.hess_log),
                pde_residual: sol.pde_residual(&point)?,
            }
        }
        None => {
            let xi = match xi {
                Some(l) => vector(l, "xi", &problem)?,
                None => DVector::zeros(problem.dim()),
            };
            let pole = Pole { xi, tau };
            let jet = log_kernel_jet(&problem, &point, &pole)?;
            KernelEvalReport {
                problem,
                x: x.iter().copied().collect(),
                t,
                value: jet.log_value.exp(),
                log_value: jet.log_value,
                grad_log: jet.grad.iter().copied().collect(),
                hess_log: rows(&jet.hess),
                pde_residual: pde_residual_relative(&problem, &point, &pole)?,
            }
        }
    };
    sink.emit("kernel-eval", true, &report)?;
    Ok(true)
}

fn sweep_config(s: &Sampling) -> Result<SweepConfig, Failure> {
    check_tol(s.tol)?;
    if s.samples == 0 {
        return fail("--samples must be at least 1");
    }
    if !(s.x_box > 0.0 && s.x_box.is_finite()) {
        return fail(format!("--x-box must be positive, got {}", s.x_box));
    }
    if !(s.t_lo > 0.0 && s.t_hi >= s.t_lo && s.t_hi.is_finite()) {
        return fail(format!("need 0 < --t-lo <= --t-hi, got {} and {}", s.t_lo, s.t_hi));
    }
    if s.max_n == 0 {
        return fail("--max-n must be at least 1");
    }
    Ok(SweepConfig {
        samples: s.samples,
        seed: s.seed,
        tol: s.tol,
        x_box: s.x_box,
        t_lo: s.t_lo,
        t_hi: s.t_hi,
        ..Default::default()
    })
}

/// Sample source of a sweep.
#[derive(Serialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum Source {
    Mixture(Problem),
    RandomMixtures(Problem),
    RandomProblems { max_n: usize },
}

impl Source {
    /// Problem of sample `index`; random problems are replayed from the
    /// sample's stream.
    fn problem_of(&self, seed: u64, index: usize) -> Problem {
        match *self {
            Source::Mixture(p) | Source::RandomMixtures(p) => p,
            Source::RandomProblems { max_n } => {
                sampling::random_problem(&mut sampling::stream(seed, index as u64), max_n)
            }
        }
    }
}

fn run_sweep(
    args: &ProblemArgs,
    mixture: Option<&Path>,
    s: &Sampling,
) -> Result<(Source, SweepReport, Vec<SampleOutcome>), Failure> {
    let cfg = sweep_config(s)?;
    let sol = mixture.map(load_mixture).transpose()?;
    let problem = resolve_problem(args, sol.as_ref())?;
    let sampler = MixtureSampler::default();
    let (source, (report, outcomes)) = match (&sol, problem) {
        (Some(sol), _) => (Source::Mixture(*sol.problem()), sweep_fixed(sol, &cfg)?),
        (None, Some(p)) => (Source::RandomMixtures(p), sweep_problem(&p, &sampler, &cfg)?),
        (None, None) => (Source::RandomProblems { max_n: s.max_n }, sweep_random(s.max_n, &sampler, &cfg)?),
    };
    Ok((source, report, outcomes))
}

#[derive(Serialize)]
struct HarnackSweep {
    source: Source,
    tol: f64,
    #[serde(flatten)]
    sweep: SweepReport,
}

pub fn check_harnack(args: &ProblemArgs, mixture: Option<&Path>, s: &Sampling, sink: &Sink) -> Result<bool, Failure> {
    let (source, sweep, _) = run_sweep(args, mixture, s)?;
    let passed = sweep.violations.is_empty();
    sink.emit("check-harnack", passed, &HarnackSweep { source, tol: s.tol, sweep })?;
    Ok(passed)
}

#[derive(Serialize)]
struct TraceViolation {
    sample: usize,
    seed: u64,
    x: Vec<f64>,
    t: f64,
    partial: f64,
    full: f64,
    diag: Vec<f64>,
    mixture_hash: String,
}

#[derive(Serialize)]
struct TraceReport {
    source: Source,
    samples: usize,
    tol: f64,
    partial_min: f64,
    full_min: f64,
    diag_min: f64,
    violations: Vec<TraceViolation>,
}

pub fn trace_check(args: &ProblemArgs, mixture: Option<&Path>, s: &Sampling, sink: &Sink) -> Result<bool, Failure> {
    let (source, sweep, outcomes) = run_sweep(args, mixture, s)?;
    let mut violations = Vec::new();
    for o in &outcomes {
        let pr = source.problem_of(s.seed, o.index);
        let (n, k, t) = (pr.n() as f64, pr.k() as f64, o.t);
        let partial_scale = 1.0 + (n + 3.0 * k) / (2.0 * t);
        let full_scale = partial_scale + 6.0 * k / t.powi(3);
        let diag_scale = 1.0 + 6.0 / t.powi(3);
        let tr = &o.traces;
        let bad = tr.partial < -s.tol * partial_scale
            || tr.full < -s.tol * full_scale
            || tr.diag.iter().any(|d| *d < -s.tol * diag_scale);
        if bad {
            violations.push(TraceViolation {
                sample: o.index,
                seed: s.seed,
                x: o.x.iter().copied().collect(),
                t,
                partial: tr.partial,
                full: tr.full,
                diag: tr.diag.clone(),
                mixture_hash: o.mixture_hash.clone(),
            });
        }
    }
    let passed = violations.is_empty();
    let report = TraceReport {
        source,
        samples: sweep.samples,
        tol: s.tol,
        partial_min: sweep.trace_partial_min,
        full_min: sweep.trace_full_min,
        diag_min: sweep.diag_min,
        violations,
    };
    sink.emit("trace-check", passed, &report)?;
    Ok(passed)
}

#[derive(Serialize)]
struct TwoPointReport {
    problem: Problem,
    p: Vec<f64>,
    q: Vec<f64>,
    t1: f64,
    t2: f64,
    bound_over_actual: f64,
    #[serde(flatten)]
    check: TwoPointCheck,
}

pub fn two_point(
    args: &ProblemArgs,
    mixture: Option<&Path>,
    p: &List,
    q: &List,
    t1: f64,
    t2: f64,
    sink: &Sink,
) -> Result<bool, Failure> {
    let sol = match mixture {
        Some(path) => load_mixture(path)?,
        None => fundamental(require_problem(args)?)?,
    };
    let problem = resolve_problem(args, Some(&sol))?.unwrap_or(*sol.problem());
    let (pv, qv) = (vector(p, "p", &problem)?, vector(q, "q", &problem)?);
    let check = two_point_check(&sol, &pv, t1, &qv, t2)?;
    let passed = check.holds;
    let report = TwoPointReport {
        problem,
        p: p.0.clone(),
        q: q.0.clone(),
        t1,
        t2,
        bound_over_actual: (check.log_bound - check.log_actual).exp(),
        check,
    };
    sink.emit("two-point", passed, &report)?;
    Ok(passed)
}

pub struct PathArgs {
    pub problem: ProblemArgs,
    pub p: List,
    pub q: List,
    pub t1: f64,
    pub t2: f64,
    pub steps: usize,
    pub gap_tol: f64,
    pub csv: Option<PathBuf>,
    pub csv_points: usize,
}

#[derive(Serialize)]
struct PathReport {
    problem: Problem,
    p: Vec<f64>,
    q: Vec<f64>,
    t1: f64,
    t2: f64,
    action: f64,
    action_by_quadrature: f64,
    action_numeric: f64,
    steps: usize,
    relative_gap: f64,
    gap_tol: f64,
    hat_coeffs: Vec<f64>,
}

pub fn path(a: &PathArgs, sink: &Sink) -> Result<bool, Failure> {
    check_tol(a.gap_tol)?;
    let problem = require_problem(&a.problem)?;
    let (p, q) = (vector(&a.p, "p", &problem)?, vector(&a.q, "q", &problem)?);
    let plan = optimal_path(&problem, &p, a.t1, &q, a.t2)?;
    let numeric = minimize_action_numeric(&problem, &p, a.t1, &q, a.t2, a.steps)?;
    let gap = (numeric.action - plan.action).abs() / plan.action.abs().max(f64::MIN_POSITIVE);
    // A zero action is matched exactly or not at all.
    let gap = if plan.action == 0.0 && numeric.action.abs() <= 1e-300 { 0.0 } else { gap };
    if let Some(path) = &a.csv {
        if a.csv_points < 2 {
            return fail("--csv-points must be at least 2");
        }
        let mut text = String::from("t");
        for d in 1..=problem.dim() {
            text.push_str(&format!(",x{d}"));
        }
        text.push('\n');
        for (t, x) in plan.sample(a.csv_points) {
            text.push_str(&t.to_string());
            for v in x.iter() {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    let passed = gap <= a.gap_tol;
    let report = PathReport {
        problem,
        p: a.p.0.clone(),
        q: a.q.0.clone(),
        t1: a.t1,
        t2: a.t2,
        action: plan.action,
        action_by_quadrature: plan.action_by_quadrature(),
        action_numeric: numeric.action,
        steps: a.steps,
        relative_gap: gap,
        gap_tol: a.gap_tol,
        hat_coeffs: plan.hat_coeffs.clone(),
    };
    sink.emit("path", passed, &report)?;
    Ok(passed)
}

#[derive(Serialize)]
struct LedgerChecks {
    determinant_is_two: bool,
    one_positive_eigenvalue: bool,
    richardson_within_1e_6: bool,
    identities_within_1e_10: bool,
    evolution_residual_within_1e_4: bool,
}

#[derive(Serialize)]
struct LedgerOutput {
    checks: LedgerChecks,
    #[serde(flatten)]
    ledger: LedgerReport,
}

pub fn ledger(sigma_grid: usize, trials: usize, seed: u64, sink: &Sink) -> Result<bool, Failure> {
    if sigma_grid < 2 {
        return fail("--sigma-grid must be at least 2");
    }
    if trials == 0 {
        return fail("--trials must be at least 1");
    }
    let cfg = LedgerConfig { sigma_grid, trials, seed, ..Default::default() };
    let rep = run_ledger(&cfg)?;
    let checks = LedgerChecks {
        determinant_is_two: rep.c0.det == 2,
        one_positive_eigenvalue: rep.c0.eigs.iter().filter(|l| **l > 0.0).count() == 1,
        richardson_within_1e_6: (rep.richardson_estimate - rep.leading_coefficient).abs() <= 1e-6,
        identities_within_1e_10: rep.identity_max_err <= 1e-10 && rep.block_form_max_err <= 1e-10,
        evolution_residual_within_1e_4: rep.evolution_residual_max <= 1e-4,
    };
    let passed = checks.determinant_is_two
        && checks.one_positive_eigenvalue
        && checks.richardson_within_1e_6
        && checks.identities_within_1e_10
        && checks.evolution_residual_within_1e_4;
    sink.emit("ledger", passed, &LedgerOutput { checks, ledger: rep })?;
    Ok(passed)
}

pub struct ScanArgs {
    pub operator: Option<PathBuf>,
    pub profile: Option<Counts>,
    pub problem: ProblemArgs,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

#[derive(Serialize)]
struct ScanOutput {
    operator: OperatorSpec,
    #[serde(flatten)]
    scan: ScanReport,
}

pub fn conjecture_scan(a: &ScanArgs, sink: &Sink) -> Result<bool, Failure> {
    check_tol(a.tol)?;
    if a.samples == 0 {
        return fail("--samples must be at least 1");
    }
    let embedded = resolve_problem(&a.problem, None)?;
    let op = match (&a.operator, &a.profile, embedded) {
        (Some(path), None, None) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<OperatorSpec>(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?
        }
        (None, Some(profile), None) => {
            if profile.0.iter().sum::<usize>() > 64 {
                return fail("profile dimension above 64 is not supported");
            }
            let mut rng = sampling::stream(a.seed, u64::MAX);
            OperatorSpec::random(&mut rng, &profile.0)?
        }
        (None, None, Some(p)) => OperatorSpec::from_problem(&p),
        _ => return fail("give exactly one of --operator, --profile, or --n/--k"),
    };
    let cfg = ScanConfig { trials: a.samples, seed: a.seed, tol: a.tol, ..Default::default() };
    let scan = general_op::conjecture_scan(&op, &cfg)?;
    let passed = scan.violations.is_empty();
    sink.emit("conjecture-scan", passed, &ScanOutput { operator: op, scan })?;
    Ok(passed)
}

pub struct BenchArgs {
    pub n: usize,
    pub k: usize,
    pub half_width: f64,
    pub ladder: Counts,
    pub t0: f64,
    pub t1: f64,
    pub pole_time: f64,
    pub min_order: f64,
    pub field_csv: Option<PathBuf>,
}

pub fn fd_bench(a: &BenchArgs, sink: &Sink) -> Result<bool, Failure> {
    let problem = Problem::new(a.n, a.k)?;
    if a.ladder.0.is_empty() {
        return fail("--ladder needs at least one grid size");
    }
    if a.pole_time.partial_cmp(&a.t0) != Some(std::cmp::Ordering::Less) {
        return fail(format!("--pole-time {} must precede --t0 {}", a.pole_time, a.t0));
    }
    if !a.min_order.is_finite() {
        return fail("--min-order must be finite");
    }
    // Reject bad grids before any work.
    for &m in &a.ladder.0 {
        Grid::new(problem, a.half_width, m, a.t0, a.t1)?;
    }
    let pole = Pole::new(vec![0.0; problem.dim()], a.pole_time);
    let report = convergence_study(problem, &pole, a.half_width, &a.ladder.0, a.t0, a.t1)?;
    if let Some(path) = &a.field_csv {
        let m = *a.ladder.0.iter().max().expect("nonempty ladder");
        let grid = Grid::new(problem, a.half_width, m, a.t0, a.t1)?;
        let exact = |x: &[f64], t: f64| kernel_value(&problem, &pole, x, t);
        let out = solve(&grid, |x| exact(x, a.t0), exact, None)?;
        let fixed: Vec<(usize, usize)> = (2..problem.dim()).map(|axis| (axis, m / 2)).collect();
        write_file(path, &csv_slice(&grid, &out.field, &fixed)?)?;
    }
    let passed = report.positive && report.monotone && report.min_order() >= a.min_order;
    sink.emit("fd-bench", passed, &report)?;
    Ok(passed)
}
