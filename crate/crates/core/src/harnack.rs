//! The Harnack defect `M = H(log u) - H(log f)` and its consequences.
//!
//! `M ⪰ 0` for every positive solution with bounded derivatives; tracing
//! gives `Σ_{i≤n} l_ii + (n+3k)/(2t) ≥ 0` and
//! `Δl + (n+3k)/(2t) + 6k/t³ ≥ 0`, and integrating along optimal paths
//! gives the two-point bound checked by [`two_point_check`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{hessian_log_f, MIN_TIME};
use crate::mixture::{MixtureSolution, SolutionJet};
use crate::problem::{Problem, SpaceTimePoint};
use crate::sampling::{self, MixtureSampler};

/// Default relative PSD tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Relative slack allowed in the two-point comparison.
pub const TWO_POINT_SLACK: f64 = 1e-10;

pub fn harnack_matrix(jet: &SolutionJet, problem: &Problem, t: f64) -> Result<DMatrix<f64>> {
    problem.check_len(jet.grad_log.len())?;
    Ok(&jet.hess_log - hessian_log_f(problem, t)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdCertificate {
    pub psd: bool,
    pub min_eigenvalue: f64,
    /// Unit eigenvector of the minimal eigenvalue, first nonzero entry positive.
    pub witness: DVector<f64>,
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Spectral norm `max |λ|`.
    pub norm2: f64,
    pub tol: f64,
}

impl PsdCertificate {
    /// Absolute eigenvalue floor `-tol (1 + ‖M‖₂)` used for the verdict.
    pub fn floor(&self) -> f64 {
        -self.tol * (1.0 + self.norm2)
    }
}

/// Eigenvalue-based PSD certificate: `psd ⇔ λ_min ≥ -tol (1 + ‖M‖₂)`.
pub fn certify_psd(m: &DMatrix<f64>, tol: f64) -> Result<PsdCertificate> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {tol}")));
    }
    let dim = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let norm2 = eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min_eigenvalue = eigenvalues[0];
    let mut witness: DVector<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let len = witness.norm();
    witness /= len;
    if let Some(first) = witness.iter().find(|v| v.abs() > 1e-14).copied() {
        if first < 0.0 {
            witness.neg_mut();
        }
    }
    Ok(PsdCertificate { psd: min_eigenvalue >= -tol * (1.0 + norm2), min_eigenvalue, witness, eigenvalues, norm2, tol })
}

/// Smallest principal minor of `M + shift·I` over all `2^N - 1` index
/// subsets. All principal minors nonnegative ⇔ PSD. Only for `N ≤ 6`.
pub fn min_principal_minor(m: &DMatrix<f64>, shift: f64) -> Result<f64> {
    let dim = m.nrows();
    if dim > 6 {
        return Err(Error::InvalidArgument(format!("principal-minor check limited to N <= 6, got {dim}")));
    }
    let mut worst = f64::INFINITY;
    for mask in 1u32..(1 << dim) {
        let idx: Vec<usize> = (0..dim).filter(|i| mask & (1 << i) != 0).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])] + if a == b { shift } else { 0.0 });
        worst = worst.min(sub.determinant());
    }
    Ok(worst)
}

/// Cross-check of a verdict: Cholesky of `M + tol (1 + ‖M‖₂) I` succeeds.
pub fn cholesky_shift_check(m: &DMatrix<f64>, cert: &PsdCertificate) -> bool {
    let shift = -cert.floor() * (1.0 + 1e-9) + f64::MIN_POSITIVE;
    let shifted = m + DMatrix::identity(m.nrows(), m.nrows()) * shift;
    shifted.cholesky().is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDefects {
    pub partial: f64,
    pub full: f64,
    pub diag: Vec<f64>,
}

/// Trace and diagonal consequences of the matrix estimate, read off the
/// log-Hessian directly:
/// `partial = Σ_{i≤n} l_ii + (n+3k)/(2t)`,
/// `full = Δl + (n+3k)/(2t) + 6k/t³`, `diag_i = l_{n+i,n+i} + 6/t³`.
pub fn trace_defects(jet: &SolutionJet, problem: &Problem, t: f64) -> Result<TraceDefects> {
    if !(t >= MIN_TIME) {
        return Err(Error::NonpositiveTime(t));
    }
    problem.check_len(jet.grad_log.len())?;
    let (n, k) = (problem.n(), problem.k());
    let h = &jet.hess_log;
    let t3 = t * t * t;
    let diffusive: f64 = (0..n).map(|i| h[(i, i)]).sum();
    let transported: f64 = (n..n + k).map(|i| h[(i, i)]).sum();
    let partial = diffusive + (n + 3 * k) as f64 / (2.0 * t);
    let full = partial + transported + 6.0 * k as f64 / t3;
    let diag = (0..k).map(|i| h[(n + i, n + i)] + 6.0 / t3).collect();
    Ok(TraceDefects { partial, full, diag })
}

/// Everything about one sample of the defect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    #[serde(rename = "M")]
    pub m: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    pub min_eigenvalue: f64,
    pub psd: bool,
    pub tol: f64,
    pub trace_defect_partial: f64,
    pub trace_defect_full: f64,
    pub diag_defects: Vec<f64>,
}

pub fn harnack_report(sol: &MixtureSolution, p: &SpaceTimePoint, tol: f64) -> Result<HarnackReport> {
    let jet = sol.solution_jet(p)?;
    let m = harnack_matrix(&jet, sol.problem(), p.t)?;
    let cert = certify_psd(&m, tol)?;
    let traces = trace_defects(&jet, sol.problem(), p.t)?;
    Ok(HarnackReport {
        m,
        eigenvalues: cert.eigenvalues,
        min_eigenvalue: cert.min_eigenvalue,
        psd: cert.psd,
        tol,
        trace_defect_partial: traces.partial,
        trace_defect_full: traces.full,
        diag_defects: traces.diag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPointCheck {
    pub log_bound: f64,
    pub log_actual: f64,
    pub bound: f64,
    pub actual: f64,
    /// `actual / bound`, from the log difference.
    pub ratio: f64,
    pub holds: bool,
}

/// Exponent `Σ_{i≤n} (q_i-p_i)²/(4Δ) + 3/Δ³ Σ_{i≤k} [q_{n+i}-p_{n+i} + ½(q_i+p_i)Δ]²`
/// of the two-point bound, `Δ = t2 - t1`.
pub fn two_point_exponent(problem: &Problem, p: &DVector<f64>, t1: f64, q: &DVector<f64>, t2: f64) -> f64 {
    let (n, k) = (problem.n(), problem.k());
    let dt = t2 - t1;
    let mut e = 0.0;
    for i in 0..n {
        let d = q[i] - p[i];
        e += d * d / (4.0 * dt);
    }
    for i in 0..k {
        let w = q[n + i] - p[n + i] + 0.5 * (q[i] + p[i]) * dt;
        e += 3.0 * w * w / (dt * dt * dt);
    }
    e
}

/// Two-point lower bound
/// `u(q,t2) ≥ (t1/t2)^{(n+3k)/2} exp(-exponent) u(p,t1)`, in log form.
pub fn two_point_check(
    sol: &MixtureSolution,
    p: &DVector<f64>,
    t1: f64,
    q: &DVector<f64>,
    t2: f64,
) -> Result<TwoPointCheck> {
    let problem = sol.problem();
    problem.check_len(p.len())?;
    problem.check_len(q.len())?;
    if !(t1 < t2) || !sol.contains_time(t1) || !sol.contains_time(t2) || t1 <= 0.0 {
        return Err(Error::BadTimes { t1, t2 });
    }
    let log_up = sol.log_u(&SpaceTimePoint { x: p.clone(), t: t1 })?;
    let log_actual = sol.log_u(&SpaceTimePoint { x: q.clone(), t: t2 })?;
    let log_bound = problem.time_exponent() * (t1 / t2).ln() - two_point_exponent(problem, p, t1, q, t2) + log_up;
    Ok(TwoPointCheck {
        log_bound,
        log_actual,
        bound: log_bound.exp(),
        actual: log_actual.exp(),
        ratio: (log_actual - log_bound).exp(),
        holds: log_actual >= log_bound + (-TWO_POINT_SLACK).ln_1p(),
    })
}

/// Random-sampling configuration for sweeps.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// Coordinates uniform in `[-x_box, x_box]^N`.
    pub x_box: f64,
    /// Times log-uniform in `[t_lo, t_hi]`, clipped to `t ≥ t_min + margin`.
    pub t_lo: f64,
    pub t_hi: f64,
    pub margin: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { samples: 1000, seed: 0, tol: DEFAULT_TOL, x_box: 5.0, t_lo: 0.05, t_hi: 10.0, margin: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample: usize,
    pub seed: u64,
    pub x: Vec<f64>,
    pub t: f64,
    pub min_eig: f64,
    pub mixture_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub samples: usize,
    pub min_eig_overall: f64,
    /// Largest `-λ_min / (1 + ‖M‖₂)` seen, i.e. the worst relative violation.
    pub worst_relative: f64,
    pub violations: Vec<Violation>,
    pub trace_partial_min: f64,
    pub trace_full_min: f64,
    pub diag_min: f64,
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub index: usize,
    pub x: DVector<f64>,
    pub t: f64,
    pub certificate: PsdCertificate,
    pub traces: TraceDefects,
    pub mixture_hash: String,
}

pub(crate) fn sample_time(rng: &mut impl rand::Rng, cfg: &SweepConfig, t_min: f64) -> f64 {
    let lo = cfg.t_lo.max(t_min + cfg.margin);
    let hi = cfg.t_hi.max(lo * (1.0 + 1e-9));
    sampling::log_uniform(rng, lo, hi)
}

fn evaluate(sol: &MixtureSolution, index: usize, x: DVector<f64>, t: f64, tol: f64) -> Result<SampleOutcome> {
    let p = SpaceTimePoint { x, t };
    let jet = sol.solution_jet(&p)?;
    let m = harnack_matrix(&jet, sol.problem(), t)?;
    let certificate = certify_psd(&m, tol)?;
    let traces = trace_defects(&jet, sol.problem(), t)?;
    Ok(SampleOutcome { index, x: p.x, t, certificate, traces, mixture_hash: sol.content_hash() })
}

/// Sweep a fixed mixture over random `(x, t)`.
pub fn sweep_fixed(sol: &MixtureSolution, cfg: &SweepConfig) -> Result<(SweepReport, Vec<SampleOutcome>)> {
    let (t_min, _) = sol.t_domain();
    let outcomes: Result<Vec<_>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(cfg.seed, i as u64);
            let x = sampling::uniform_vec(&mut rng, sol.problem().dim(), -cfg.x_box, cfg.x_box);
            let t = sample_time(&mut rng, cfg, t_min);
            evaluate(sol, i, x, t, cfg.tol)
        })
        .collect();
    let outcomes = outcomes?;
    Ok((summarize(&outcomes, cfg.seed), outcomes))
}

/// Sweep random mixtures: each sample draws its own `(n, k)` with
/// `n ≤ max_n`, its own mixture and its own point.
pub fn sweep_random(
    max_n: usize,
    sampler: &MixtureSampler,
    cfg: &SweepConfig,
) -> Result<(SweepReport, Vec<SampleOutcome>)> {
    let outcomes: Result<Vec<_>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(cfg.seed, i as u64);
            let problem = sampling::random_problem(&mut rng, max_n);
            let sol = sampler.mixture(&mut rng, &problem);
            let x = sampling::uniform_vec(&mut rng, problem.dim(), -cfg.x_box, cfg.x_box);
            let t = sample_time(&mut rng, cfg, sol.t_domain().0);
            evaluate(&sol, i, x, t, cfg.tol)
        })
        .collect();
    let outcomes = outcomes?;
    Ok((summarize(&outcomes, cfg.seed), outcomes))
}

/// Sweep random mixtures of one fixed `problem`.
pub fn sweep_problem(
    problem: &Problem,
    sampler: &MixtureSampler,
    cfg: &SweepConfig,
) -> Result<(SweepReport, Vec<SampleOutcome>)> {
    let outcomes: Result<Vec<_>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::stream(cfg.seed, i as u64);
            let sol = sampler.mixture(&mut rng, problem);
            let x = sampling::uniform_vec(&mut rng, problem.dim(), -cfg.x_box, cfg.x_box);
            let t = sample_time(&mut rng, cfg, sol.t_domain().0);
            evaluate(&sol, i, x, t, cfg.tol)
        })
        .collect();
    let outcomes = outcomes?;
    Ok((summarize(&outcomes, cfg.seed), outcomes))
}

pub fn summarize(outcomes: &[SampleOutcome], seed: u64) -> SweepReport {
    let mut report = SweepReport {
        samples: outcomes.len(),
        min_eig_overall: f64::INFINITY,
        worst_relative: f64::NEG_INFINITY,
        violations: Vec::new(),
        trace_partial_min: f64::INFINITY,
        trace_full_min: f64::INFINITY,
        diag_min: f64::INFINITY,
    };
    for o in outcomes {
        let c = &o.certificate;
        report.min_eig_overall = report.min_eig_overall.min(c.min_eigenvalue);
        report.worst_relative = report.worst_relative.max(-c.min_eigenvalue / (1.0 + c.norm2));
        report.trace_partial_min = report.trace_partial_min.min(o.traces.partial);
        report.trace_full_min = report.trace_full_min.min(o.traces.full);
        for d in &o.traces.diag {
            report.diag_min = report.diag_min.min(*d);
        }
        if !c.psd {
            report.violations.push(Violation {
                sample: o.index,
                seed,
                x: o.x.iter().copied().collect(),
                t: o.t,
                min_eig: c.min_eigenvalue,
                mixture_hash: o.mixture_hash.clone(),
            });
        }
    }
    report
}
