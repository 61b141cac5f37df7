//! Positive solutions built as positive superpositions of kernels plus the
//! caloric polynomial
//!
//! ```text
//!     v(x,t) = t² Σ_{i≤k} x_i² + Σ_{i≤N} x_i² + 2t (Σ_{i≤k} x_i x_{n+i} + n) + (2k/3) t³.
//! ```
//!
//! Log-derivatives are formed from per-component log-jets with log-domain
//! responsibilities, so weights spanning hundreds of orders of magnitude are
//! fine.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{self, log_kernel_jet, MIN_TIME};
use crate::problem::{Pole, Problem, SpaceTimePoint};

/// Responsibilities below this are dropped (far-field polynomial branch).
const NEGLIGIBLE_RESPONSIBILITY: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub log_weight: f64,
    pub pole: Pole,
}

impl Component {
    pub fn new(weight: f64, pole: Pole) -> Self {
        Self { log_weight: weight.ln(), pole }
    }
}

/// Value and exact space derivatives of the caloric polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct CaloricPolynomial {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub fn caloric_polynomial(problem: &Problem, p: &SpaceTimePoint) -> Result<CaloricPolynomial> {
    problem.check_len(p.x.len())?;
    let t = p.t;
    if !(t >= MIN_TIME) {
        return Err(Error::NonpositiveTime(t));
    }
    let (n, k, dim) = (problem.n(), problem.k(), problem.dim());
    let x = &p.x;
    let mut value = 2.0 * t * n as f64 + 2.0 * k as f64 / 3.0 * t * t * t;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        value += x[i] * x[i];
        grad[i] = 2.0 * x[i];
        hess[(i, i)] = 2.0;
    }
    for i in 0..k {
        value += t * t * x[i] * x[i] + 2.0 * t * x[i] * x[n + i];
        grad[i] += 2.0 * t * t * x[i] + 2.0 * t * x[n + i];
        grad[n + i] += 2.0 * t * x[i];
        hess[(i, i)] += 2.0 * t * t;
        hess[(i, n + i)] = 2.0 * t;
        hess[(n + i, i)] = 2.0 * t;
    }
    Ok(CaloricPolynomial { value, grad, hess })
}

/// `∂t v` of the caloric polynomial.
pub fn caloric_polynomial_time_derivative(problem: &Problem, p: &SpaceTimePoint) -> Result<f64> {
    problem.check_len(p.x.len())?;
    let (n, k) = (problem.n(), problem.k());
    let t = p.t;
    let mut dt = 2.0 * n as f64 + 2.0 * k as f64 * t * t;
    for i in 0..k {
        dt += 2.0 * t * p.x[i] * p.x[i] + 2.0 * p.x[i] * p.x[n + i];
    }
    Ok(dt)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionJet {
    pub u: f64,
    pub grad_u: DVector<f64>,
    pub hess_u: DMatrix<f64>,
    pub log_u: f64,
    pub grad_log: DVector<f64>,
    pub hess_log: DMatrix<f64>,
}

/// A positive solution `u = Σ w_j Γ(·;ξ_j,τ_j) + ε v` on the time interval
/// `(t_min, t_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSolution {
    problem: Problem,
    components: Vec<Component>,
    epsilon: f64,
    t_min: f64,
    t_max: f64,
}

impl MixtureSolution {
    /// Builds a mixture on its natural domain `(max(τ_j, 0 if ε > 0), ∞)`.
    pub fn new(problem: Problem, components: Vec<Component>, epsilon: f64) -> Result<Self> {
        let mut t_min = components.iter().map(|c| c.pole.tau).fold(f64::NEG_INFINITY, f64::max);
        if epsilon > 0.0 {
            t_min = t_min.max(0.0);
        }
        Self::with_domain(problem, components, epsilon, t_min, f64::INFINITY)
    }

    pub fn with_domain(
        problem: Problem,
        components: Vec<Component>,
        epsilon: f64,
        t_min: f64,
        t_max: f64,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidMixture(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        if components.is_empty() && epsilon == 0.0 {
            return Err(Error::EmptySolution);
        }
        for (j, c) in components.iter().enumerate() {
            problem.check_len(c.pole.xi.len())?;
            if !c.log_weight.is_finite() {
                return Err(Error::InvalidMixture(format!("component {j}: weight must be positive and finite")));
            }
            if !c.pole.tau.is_finite() || c.pole.xi.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMixture(format!("component {j}: non-finite pole")));
            }
            if c.pole.tau > t_min {
                return Err(Error::InvalidMixture(format!(
                    "component {j}: pole time {} is inside the domain starting at {t_min}",
                    c.pole.tau
                )));
            }
        }
        if epsilon > 0.0 && t_min < 0.0 {
            return Err(Error::InvalidMixture("the polynomial term needs t_min >= 0".into()));
        }
        if t_min.is_nan() || t_max.is_nan() || t_max <= t_min {
            return Err(Error::InvalidMixture(format!("empty time domain ({t_min}, {t_max})")));
        }
        Ok(Self { problem, components, epsilon, t_min, t_max })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn t_domain(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t > self.t_min && t < self.t_max
    }

    /// Same mixture with every weight multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {factor}")));
        }
        let lf = factor.ln();
        let components =
            self.components.iter().map(|c| Component { log_weight: c.log_weight + lf, pole: c.pole.clone() }).collect();
        Self::with_domain(self.problem, components, self.epsilon * factor, self.t_min, self.t_max)
    }

    fn check_point(&self, p: &SpaceTimePoint) -> Result<()> {
        self.problem.check_len(p.x.len())?;
        if !self.contains_time(p.t) {
            return Err(Error::OutOfDomain { t: p.t, t_min: self.t_min, t_max: self.t_max });
        }
        Ok(())
    }

    /// Log-jets of every term, kernels first, the polynomial last.
    fn term_jets(&self, p: &SpaceTimePoint) -> Result<Vec<TermJet>> {
        let mut terms = Vec::with_capacity(self.components.len() + 1);
        for c in &self.components {
            let jet = log_kernel_jet(&self.problem, p, &c.pole)?;
            terms.push(TermJet { log_mass: c.log_weight + jet.log_value, grad: jet.grad, hess_log: jet.hess });
        }
        if self.epsilon > 0.0 {
            let poly = caloric_polynomial(&self.problem, p)?;
            let g = &poly.grad / poly.value;
            let hess_log = &poly.hess / poly.value - &g * g.transpose();
            terms.push(TermJet { log_mass: self.epsilon.ln() + poly.value.ln(), grad: g, hess_log });
        }
        Ok(terms)
    }

    /// Normalized responsibilities `π_j` (polynomial term last when present).
    pub fn responsibilities(&self, p: &SpaceTimePoint) -> Result<Vec<f64>> {
        self.check_point(p)?;
        let terms = self.term_jets(p)?;
        let (_, pis) = normalize(&terms);
        Ok(pis)
    }

    pub fn log_u(&self, p: &SpaceTimePoint) -> Result<f64> {
        self.check_point(p)?;
        let terms = self.term_jets(p)?;
        Ok(normalize(&terms).0)
    }

    pub fn solution_jet(&self, p: &SpaceTimePoint) -> Result<SolutionJet> {
        self.check_point(p)?;
        let terms = self.term_jets(p)?;
        let (log_u, mean, hess_log) = combine_log_jets(&terms, self.problem.dim());

        let u = log_u.exp();
        let grad_u = &mean * u;
        let mut hess_u = &hess_log * u;
        hess_u.ger(u, &mean, &mean, 1.0);
        symmetrize(&mut hess_u);
        Ok(SolutionJet { u, grad_u, hess_u, log_u, grad_log: mean, hess_log })
    }

    /// Residual of the log equation `l_t - Σ(l_ii + l_i²) - Σ x_i l_{n+i}`
    /// with `l_t` from central differences of `log u` in time.
    pub fn pde_residual(&self, p: &SpaceTimePoint) -> Result<f64> {
        let jet = self.solution_jet(p)?;
        let lt = self.log_time_derivative(p)?;
        Ok(kernel::log_equation_residual(&self.problem, &p.x, lt, &jet.grad_log, &jet.hess_log))
    }

    /// `∂t log u` by Richardson-extrapolated central differences with base
    /// step `1e-5 t`, shrunk to stay inside the domain.
    pub fn log_time_derivative(&self, p: &SpaceTimePoint) -> Result<f64> {
        self.check_point(p)?;
        let room = (p.t - self.t_min).min(self.t_max - p.t);
        let h = (1e-5 * p.t).min(0.25 * room);
        let central = |h: f64| -> Result<f64> {
            let fwd = self.log_u(&SpaceTimePoint { x: p.x.clone(), t: p.t + h })?;
            let bwd = self.log_u(&SpaceTimePoint { x: p.x.clone(), t: p.t - h })?;
            Ok((fwd - bwd) / (2.0 * h))
        };
        let coarse = central(h)?;
        let fine = central(0.5 * h)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }

    /// Stable content hash of the mixture definition.
    pub fn content_hash(&self) -> String {
        let file = MixtureFile::from(self);
        let bytes = serde_json::to_vec(&file).expect("mixture serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MixtureFile = serde_json::from_str(text)?;
        file.into_solution()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MixtureFile::from(self)).expect("mixture serializes")
    }
}

/// `pde_residual_mixture`.
pub fn pde_residual_mixture(sol: &MixtureSolution, p: &SpaceTimePoint) -> Result<f64> {
    sol.pde_residual(p)
}

pub fn solution_jet(sol: &MixtureSolution, p: &SpaceTimePoint) -> Result<SolutionJet> {
    sol.solution_jet(p)
}

/// One term `exp(log_mass)` of a positive sum with its log-gradient and
/// log-Hessian.
pub(crate) struct TermJet {
    pub(crate) log_mass: f64,
    pub(crate) grad: DVector<f64>,
    pub(crate) hess_log: DMatrix<f64>,
}

/// `(log u, ∇ log u, H(log u))` for `u = Σ exp(log_mass_j)`.
pub(crate) fn combine_log_jets(terms: &[TermJet], dim: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
    let (log_u, pis) = normalize(terms);
    let mut mean = DVector::zeros(dim);
    for (term, &pi) in terms.iter().zip(&pis) {
        if pi > NEGLIGIBLE_RESPONSIBILITY {
            mean.axpy(pi, &term.grad, 1.0);
        }
    }
    // H(log u) = Σ π_j (H_j + g_j g_jᵀ) - m mᵀ, accumulated in the centred
    // form Σ π_j H_j + Σ π_j (g_j - m)(g_j - m)ᵀ.
    let mut hess_log = DMatrix::zeros(dim, dim);
    for (term, &pi) in terms.iter().zip(&pis) {
        if pi <= NEGLIGIBLE_RESPONSIBILITY {
            continue;
        }
        hess_log += &term.hess_log * pi;
        let d = &term.grad - &mean;
        hess_log.ger(pi, &d, &d, 1.0);
    }
    symmetrize(&mut hess_log);
    (log_u, mean, hess_log)
}

/// Returns `log Σ exp(a_j)` and the normalized weights.
fn normalize(terms: &[TermJet]) -> (f64, Vec<f64>) {
    let top = terms.iter().map(|t| t.log_mass).fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = terms.iter().map(|t| (t.log_mass - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let pis = raw.iter().map(|r| r / total).collect();
    (top + total.ln(), pis)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let dim = m.nrows();
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// On-disk mixture description.
///
/// ```json
/// {"n": 1, "k": 1, "poles": [{"xi": [0, 0], "tau": 0, "weight": 1}], "epsilon": 0}
/// ```
///
/// Each pole carries either `weight` (> 0) or `log_weight`; weight 1 when
/// both are absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureFile {
    pub n: usize,
    pub k: usize,
    pub poles: Vec<PoleEntry>,
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleEntry {
    pub xi: Vec<f64>,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_weight: Option<f64>,
}

impl MixtureFile {
    pub fn into_solution(self) -> Result<MixtureSolution> {
        let problem = Problem::new(self.n, self.k)?;
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidMixture(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        let mut components = Vec::with_capacity(self.poles.len());
        for (j, entry) in self.poles.into_iter().enumerate() {
            let log_weight = match (entry.weight, entry.log_weight) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidMixture(format!("pole {j}: give weight or log_weight, not both")))
                }
                (Some(w), None) => {
                    if !w.is_finite() || w <= 0.0 {
                        return Err(Error::InvalidMixture(format!(
                            "pole {j}: weight must be positive and finite, got {w}"
                        )));
                    }
                    w.ln()
                }
                (None, Some(lw)) => {
                    if !lw.is_finite() {
                        return Err(Error::InvalidMixture(format!("pole {j}: log_weight must be finite")));
                    }
                    lw
                }
                (None, None) => 0.0,
            };
            if entry.xi.iter().any(|v| !v.is_finite()) || !entry.tau.is_finite() {
                return Err(Error::InvalidMixture(format!("pole {j}: non-finite coordinates")));
            }
            components.push(Component { log_weight, pole: Pole::new(entry.xi, entry.tau) });
        }
        MixtureSolution::new(problem, components, self.epsilon)
    }
}

impl From<&MixtureSolution> for MixtureFile {
    fn from(sol: &MixtureSolution) -> Self {
        Self {
            n: sol.problem.n(),
            k: sol.problem.k(),
            poles: sol
                .components
                .iter()
                .map(|c| PoleEntry {
                    xi: c.pole.xi.iter().copied().collect(),
                    tau: c.pole.tau,
                    weight: None,
                    log_weight: Some(c.log_weight),
                })
                .collect(),
            epsilon: sol.epsilon,
        }
    }
}
