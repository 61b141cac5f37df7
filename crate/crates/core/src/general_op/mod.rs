//! Operators `L = div(A D) + ⟨x, B D⟩ - ∂t` with `A = diag(A₀, 0)` and `B`
//! block-superdiagonal, and their Gaussian kernels.
//!
//! The kernel is the transition density of `dX = Bᵀ X ds + √(2A) dW`:
//! starting from `x`, after time `s` the state is Gaussian with mean `E(s) x`
//! and covariance `C(s)`, where `E' = Bᵀ E`, `C' = Bᵀ C + C B + 2A`,
//! `E(0) = I`, `C(0) = 0`. Both are integrated numerically.

pub mod ode;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harnack::{certify_psd, harnack_matrix, Violation};
use crate::kernel::KernelJet;
use crate::mixture::{combine_log_jets, Component, MixtureSolution, TermJet};
use crate::problem::{Pole, Problem, SpaceTimePoint};
use crate::sampling;

/// Condition number beyond which an integrated covariance is rejected.
pub const MAX_COVARIANCE_CONDITION: f64 = 1e14;

/// Relative eigenvalue floor for flagging a possible counterexample.
pub const SCAN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct OperatorSpec {
    pub p: Vec<usize>,
    pub a0: DMatrix<f64>,
    pub b_blocks: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    p: Vec<usize>,
    #[serde(rename = "A0")]
    a0: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<f64>>>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!("{what} must be a nonempty rectangular matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<RawSpec> for OperatorSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let a0 = rows_to_matrix(&raw.a0, "A0")?;
        let b_blocks = raw
            .b
            .iter()
            .enumerate()
            .map(|(i, rows)| rows_to_matrix(rows, &format!("B[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let op = Self { p: raw.p, a0, b_blocks };
        op.validate()?;
        Ok(op)
    }
}

impl From<OperatorSpec> for RawSpec {
    fn from(op: OperatorSpec) -> Self {
        Self { p: op.p, a0: matrix_to_rows(&op.a0), b: op.b_blocks.iter().map(matrix_to_rows).collect() }
    }
}

impl OperatorSpec {
    pub fn new(p: Vec<usize>, a0: DMatrix<f64>, b_blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let op = Self { p, a0, b_blocks };
        op.validate()?;
        Ok(op)
    }

    /// The embedding of `Problem { n, k }`: `p = (n, k)`, `A₀ = I_n`,
    /// `B₁ = [I_k; 0]`.
    pub fn from_problem(problem: &Problem) -> Self {
        let (n, k) = (problem.n(), problem.k());
        Self {
            p: vec![n, k],
            a0: DMatrix::identity(n, n),
            b_blocks: vec![DMatrix::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 })],
        }
    }

    pub fn dim(&self) -> usize {
        self.p.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.p;
        if p.len() < 2 {
            return Err(Error::BadProfile(format!("need at least two blocks, got {p:?}")));
        }
        if p.contains(&0) || p.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::BadProfile(format!("profile must be nonincreasing and positive, got {p:?}")));
        }
        if self.b_blocks.len() != p.len() - 1 {
            return Err(Error::BadProfile(format!(
                "profile {p:?} needs {} drift blocks, got {}",
                p.len() - 1,
                self.b_blocks.len()
            )));
        }
        if self.a0.shape() != (p[0], p[0]) {
            return Err(Error::BadProfile(format!(
                "A0 must be {}x{}, got {}x{}",
                p[0],
                p[0],
                self.a0.nrows(),
                self.a0.ncols()
            )));
        }
        for (i, b) in self.b_blocks.iter().enumerate() {
            if b.shape() != (p[i], p[i + 1]) {
                return Err(Error::BadProfile(format!(
                    "B[{i}] must be {}x{}, got {}x{}",
                    p[i],
                    p[i + 1],
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        if (&self.a0 - self.a0.transpose()).amax() > 1e-12 * (1.0 + self.a0.amax()) {
            return Err(Error::NotSpd);
        }
        if self.a0.clone().cholesky().is_none() || self.a0.clone().symmetric_eigen().eigenvalues.min() <= 0.0 {
            return Err(Error::NotSpd);
        }
        for (i, b) in self.b_blocks.iter().enumerate() {
            let sv = b.clone().svd(false, false).singular_values;
            let top = sv.max();
            let rank = sv.iter().filter(|s| **s > 1e-10 * top && top > 0.0).count();
            if rank < p[i + 1] {
                return Err(Error::RankDeficient { index: i, rank, needed: p[i + 1] });
            }
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = vec![0];
        for v in &self.p {
            out.push(out.last().unwrap() + v);
        }
        out
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut a = DMatrix::zeros(dim, dim);
        a.view_mut((0, 0), (self.p[0], self.p[0])).copy_from(&self.a0);
        a
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let off = self.offsets();
        let mut b = DMatrix::zeros(dim, dim);
        for (i, block) in self.b_blocks.iter().enumerate() {
            b.view_mut((off[i], off[i + 1]), block.shape()).copy_from(block);
        }
        b
    }

    /// Random admissible operator for `profile`: `A₀ = QΛQᵀ` with `Λ` in
    /// `[0.5, 2]` and each `B_i = U Σ Vᵀ` with singular values in `[0.5, 2]`.
    pub fn random(rng: &mut impl Rng, profile: &[usize]) -> Result<Self> {
        let p0 = *profile.first().ok_or_else(|| Error::BadProfile("empty profile".into()))?;
        let q = random_orthogonal(rng, p0);
        let lam = DMatrix::from_diagonal(&DVector::from_fn(p0, |_, _| rng.random_range(0.5..2.0)));
        let mut a0 = &q * lam * q.transpose();
        crate::mixture::symmetrize(&mut a0);
        let mut blocks = Vec::new();
        for w in profile.windows(2) {
            let (rows, cols) = (w[0], w[1]);
            let u = random_orthogonal(rng, rows);
            let v = random_orthogonal(rng, cols);
            let sigma = DMatrix::from_fn(rows, cols, |i, j| if i == j { rng.random_range(0.5..2.0) } else { 0.0 });
            blocks.push(u * sigma * v.transpose());
        }
        Self::new(profile.to_vec(), a0, blocks)
    }
}

fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    loop {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let qr = g.qr();
        let r = qr.r();
        if (0..dim).all(|i| r[(i, i)].abs() > 1e-3) {
            return qr.q();
        }
    }
}

/// Mean map `E(s)` and covariance `C(s)` of the flow after time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFlow {
    pub span: f64,
    pub mean_map: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    covariance_inv: DMatrix<f64>,
    log_det_2pi_cov: f64,
}

impl GaussianFlow {
    pub fn new(op: &OperatorSpec, span: f64) -> Result<Self> {
        let dim = op.dim();
        let a2 = op.a_matrix() * 2.0;
        let bt = op.b_matrix().transpose();
        let b = op.b_matrix();
        let rhs = |y: &DVector<f64>| -> DVector<f64> {
            let e = DMatrix::from_column_slice(dim, dim, &y.as_slice()[..dim * dim]);
            let c = DMatrix::from_column_slice(dim, dim, &y.as_slice()[dim * dim..]);
            let de = &bt * e;
            let dc = &bt * &c + &c * &b + &a2;
            let mut out = DVector::zeros(2 * dim * dim);
            out.as_mut_slice()[..dim * dim].copy_from_slice(de.as_slice());
            out.as_mut_slice()[dim * dim..].copy_from_slice(dc.as_slice());
            out
        };
        let mut y0 = DVector::zeros(2 * dim * dim);
        y0.as_mut_slice()[..dim * dim].copy_from_slice(DMatrix::<f64>::identity(dim, dim).as_slice());
        let y = ode::integrate(rhs, y0, span, ode::Tolerance::default())?;
        let mean_map = DMatrix::from_column_slice(dim, dim, &y.as_slice()[..dim * dim]);
        let mut covariance = DMatrix::from_column_slice(dim, dim, &y.as_slice()[dim * dim..]);
        crate::mixture::symmetrize(&mut covariance);

        let eig = covariance.clone().symmetric_eigen();
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(cond <= MAX_COVARIANCE_CONDITION) {
            return Err(Error::SingularCovariance(cond));
        }
        let chol = covariance.clone().cholesky().ok_or(Error::SingularCovariance(cond))?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let mut covariance_inv = chol.inverse();
        crate::mixture::symmetrize(&mut covariance_inv);
        Ok(Self {
            span,
            mean_map,
            covariance,
            covariance_inv,
            log_det_2pi_cov: log_det + dim as f64 * (2.0 * std::f64::consts::PI).ln(),
        })
    }

    /// Log-jet in `x` of the density of reaching `xi` from `x`.
    pub fn log_jet(&self, x: &DVector<f64>, xi: &DVector<f64>) -> KernelJet {
        let d = xi - &self.mean_map * x;
        let cd = &self.covariance_inv * &d;
        let mut hess = -(self.mean_map.transpose() * &self.covariance_inv * &self.mean_map);
        crate::mixture::symmetrize(&mut hess);
        KernelJet {
            log_value: -0.5 * d.dot(&cd) - 0.5 * self.log_det_2pi_cov,
            grad: self.mean_map.transpose() * cd,
            hess,
        }
    }

    /// `-Eᵀ C⁻¹ E`, the (space-independent) log-Hessian of every kernel at
    /// this time lag.
    pub fn log_hessian(&self) -> DMatrix<f64> {
        self.log_jet(&DVector::zeros(self.mean_map.nrows()), &DVector::zeros(self.mean_map.nrows())).hess
    }
}

/// Log-jet of the Gaussian kernel `Γ(x, t; ξ, τ)` of `op`.
pub fn kernel_numeric(op: &OperatorSpec, x: &DVector<f64>, t: f64, xi: &DVector<f64>, tau: f64) -> Result<KernelJet> {
    let dim = op.dim();
    for len in [x.len(), xi.len()] {
        if len != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: len });
        }
    }
    if !(t > tau) {
        return Err(Error::PoleNotInPast { t, tau });
    }
    Ok(GaussianFlow::new(op, t - tau)?.log_jet(x, xi))
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_poles: usize,
    pub pole_box: f64,
    pub pole_age: f64,
    pub log_weight_range: f64,
    pub x_box: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub margin: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 0,
            tol: SCAN_TOL,
            max_poles: 5,
            pole_box: 2.0,
            pole_age: 1.0,
            log_weight_range: 3.0,
            x_box: 2.0,
            t_lo: 0.2,
            t_hi: 5.0,
            margin: 0.05,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.pole_box, self.pole_age, self.log_weight_range, self.x_box, self.margin];
        if !nonneg.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidArgument("scan ranges must be finite and nonnegative".into()));
        }
        if !(self.t_lo > 0.0 && self.t_hi >= self.t_lo && self.t_hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scan times need 0 < t_lo <= t_hi, got [{}, {}]",
                self.t_lo, self.t_hi
            )));
        }
        if !(self.tol >= 0.0) || self.max_poles == 0 {
            return Err(Error::InvalidArgument("scan needs tol >= 0 and at least one pole".into()));
        }
        Ok(())
    }
}

/// One random case: a mixture of kernels, a point, and the defect there.
#[derive(Debug, Clone)]
pub struct ScanSample {
    pub index: usize,
    pub components: Vec<Component>,
    pub x: DVector<f64>,
    pub t: f64,
    /// `H(log u) - H(log Γ(·, t; 0, 0))`.
    pub m: DMatrix<f64>,
}

pub fn scan_sample(op: &OperatorSpec, cfg: &ScanConfig, index: usize) -> Result<ScanSample> {
    cfg.validate()?;
    let dim = op.dim();
    let mut rng = sampling::stream(cfg.seed, index as u64);
    let count = rng.random_range(1..=cfg.max_poles.max(1));
    let components: Vec<Component> = (0..count)
        .map(|_| {
            let xi = sampling::uniform_vec(&mut rng, dim, -cfg.pole_box, cfg.pole_box);
            let tau = if rng.random_bool(0.25) { 0.0 } else { -sampling::uniform(&mut rng, 0.0, cfg.pole_age) };
            Component {
                log_weight: rng.random_range(-cfg.log_weight_range..=cfg.log_weight_range),
                pole: Pole { xi, tau },
            }
        })
        .collect();
    let x = sampling::uniform_vec(&mut rng, dim, -cfg.x_box, cfg.x_box);
    let t_min = components.iter().map(|c| c.pole.tau).fold(f64::NEG_INFINITY, f64::max);
    let lo = cfg.t_lo.max(t_min + cfg.margin);
    let t = sampling::log_uniform(&mut rng, lo, cfg.t_hi.max(lo * (1.0 + 1e-9)));

    let terms = components
        .iter()
        .map(|c| {
            let jet = kernel_numeric(op, &x, t, &c.pole.xi, c.pole.tau)?;
            Ok(TermJet { log_mass: c.log_weight + jet.log_value, grad: jet.grad, hess_log: jet.hess })
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, _, hess_log) = combine_log_jets(&terms, dim);
    let reference = GaussianFlow::new(op, t)?.log_hessian();
    Ok(ScanSample { index, components, x, t, m: hess_log - reference })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialWorst {
    pub trial: usize,
    pub min_eig: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    /// Always `"evidence"`: sampling cannot prove the inequality.
    pub status: String,
    pub profile: Vec<usize>,
    pub samples: usize,
    pub min_eig_overall: f64,
    pub worst_relative: f64,
    /// Flag threshold `-tol (1 + ‖M‖₂)` is relative with this `tol`.
    pub noise_tol: f64,
    pub violations: Vec<Violation>,
    pub trials: Vec<TrialWorst>,
}

fn sample_hash(op: &OperatorSpec, sample: &ScanSample) -> String {
    let payload = serde_json::json!({ "op": op, "components": sample.components });
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

pub fn conjecture_scan(op: &OperatorSpec, cfg: &ScanConfig) -> Result<ScanReport> {
    op.validate()?;
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let sample = scan_sample(op, cfg, i)?;
            let cert = certify_psd(&sample.m, cfg.tol)?;
            Ok((sample, cert))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ScanReport {
        status: "evidence".into(),
        profile: op.p.clone(),
        samples: outcomes.len(),
        min_eig_overall: f64::INFINITY,
        worst_relative: f64::NEG_INFINITY,
        noise_tol: cfg.tol,
        violations: Vec::new(),
        trials: Vec::with_capacity(outcomes.len()),
    };
    for (sample, cert) in &outcomes {
        let relative = -cert.min_eigenvalue / (1.0 + cert.norm2);
        report.min_eig_overall = report.min_eig_overall.min(cert.min_eigenvalue);
        report.worst_relative = report.worst_relative.max(relative);
        report.trials.push(TrialWorst { trial: sample.index, min_eig: cert.min_eigenvalue, relative });
        if !cert.psd {
            report.violations.push(Violation {
                sample: sample.index,
                seed: cfg.seed,
                x: sample.x.iter().copied().collect(),
                t: sample.t,
                min_eig: cert.min_eigenvalue,
                mixture_hash: sample_hash(op, sample),
            });
        }
    }
    Ok(report)
}

/// Largest `|λ_min(M_scan) - λ_min(M_harnack)|` over `trials` scan samples
/// of the embedded operator, with the same mixtures evaluated through the
/// closed-form kernels.
pub fn embedded_agreement(problem: &Problem, cfg: &ScanConfig) -> Result<f64> {
    let op = OperatorSpec::from_problem(problem);
    let diffs = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let sample = scan_sample(&op, cfg, i)?;
            let sol = MixtureSolution::new(*problem, sample.components.clone(), 0.0)?;
            let jet = sol.solution_jet(&SpaceTimePoint { x: sample.x.clone(), t: sample.t })?;
            let closed = harnack_matrix(&jet, problem, sample.t)?;
            let a = certify_psd(&sample.m, 0.0)?.min_eigenvalue;
            let b = certify_psd(&closed, 0.0)?.min_eigenvalue;
            Ok((a - b).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(diffs.into_iter().fold(0.0, f64::max))
}
