//! Closed-form fundamental solutions of the Kolmogorov equation.
//!
//! With `s = t - τ > 0`,
//!
//! ```text
//!     Γ(x,t;ξ,τ) = C s^{-(n+3k)/2} exp( -1/(4s) Σ_{i≤n} (x_i-ξ_i)²
//!                                      - 3/s³ Σ_{i≤k} (x_{n+i}-ξ_{n+i} + ½(x_i+ξ_i) s)² )
//! ```
//!
//! and `f(x,t) = Γ(x,t;0,0)`. Everything is evaluated in the log domain from
//! the completed-square form above. `C` is fixed by unit spatial mass.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Pole, Problem, SpaceTimePoint};

/// Smallest admissible elapsed time; the `1/t³` entries overflow in double
/// precision below this scale.
pub const MIN_TIME: f64 = 1e-12;

/// Value, gradient and Hessian of `log Γ` with respect to the space variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelJet {
    pub log_value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Unit-mass normalization `C(n, k) = (√3 / 2π)^k (4π)^{-(n-k)/2}`.
pub fn normalization_constant(problem: &Problem) -> f64 {
    log_normalization_constant(problem).exp()
}

pub fn log_normalization_constant(problem: &Problem) -> f64 {
    let k = problem.k() as f64;
    let free = (problem.n() - problem.k()) as f64;
    k * (3f64.sqrt() / (2.0 * PI)).ln() - 0.5 * free * (4.0 * PI).ln()
}

fn elapsed(t: f64, tau: f64) -> Result<f64> {
    let s = t - tau;
    if !(s > 0.0) {
        return Err(Error::PoleNotInPast { t, tau });
    }
    if s < MIN_TIME {
        return Err(Error::NonpositiveTime(s));
    }
    Ok(s)
}

/// Transport residual `w_i = x_{n+i} - ξ_{n+i} + ½(x_i + ξ_i) s` for `i < k`.
#[inline]
fn transport_residual(problem: &Problem, x: &DVector<f64>, xi: &DVector<f64>, i: usize, s: f64) -> f64 {
    let n = problem.n();
    x[n + i] - xi[n + i] + 0.5 * (x[i] + xi[i]) * s
}

/// Exact log-jet of `Γ(·, t; ξ, τ)` at `p.x`.
pub fn log_kernel_jet(problem: &Problem, p: &SpaceTimePoint, pole: &Pole) -> Result<KernelJet> {
    problem.check_len(p.x.len())?;
    problem.check_len(pole.xi.len())?;
    let s = elapsed(p.t, pole.tau)?;
    let (n, k, dim) = (problem.n(), problem.k(), problem.dim());
    let x = &p.x;
    let xi = &pole.xi;

    let mut exponent = 0.0;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);

    for i in 0..n {
        let d = x[i] - xi[i];
        exponent -= d * d / (4.0 * s);
        grad[i] -= d / (2.0 * s);
        hess[(i, i)] -= 1.0 / (2.0 * s);
    }
    let s2 = s * s;
    let s3 = s2 * s;
    for i in 0..k {
        let w = transport_residual(problem, x, xi, i, s);
        exponent -= 3.0 * w * w / s3;
        grad[i] -= 3.0 * w / s2;
        grad[n + i] -= 6.0 * w / s3;
        hess[(i, i)] -= 3.0 / (2.0 * s);
        let off = -3.0 / s2;
        hess[(i, n + i)] = off;
        hess[(n + i, i)] = off;
        hess[(n + i, n + i)] = -6.0 / s3;
    }

    let log_value = log_normalization_constant(problem) - problem.time_exponent() * s.ln() + exponent;
    Ok(KernelJet { log_value, grad, hess })
}

/// `∂t log Γ` in closed form.
pub fn log_kernel_time_derivative(problem: &Problem, p: &SpaceTimePoint, pole: &Pole) -> Result<f64> {
    problem.check_len(p.x.len())?;
    problem.check_len(pole.xi.len())?;
    let s = elapsed(p.t, pole.tau)?;
    let (n, k) = (problem.n(), problem.k());
    let mut dt = -problem.time_exponent() / s;
    for i in 0..n {
        let d = p.x[i] - pole.xi[i];
        dt += d * d / (4.0 * s * s);
    }
    let s3 = s * s * s;
    for i in 0..k {
        let w = transport_residual(problem, &p.x, &pole.xi, i, s);
        let dw = 0.5 * (p.x[i] + pole.xi[i]);
        dt += 9.0 * w * w / (s3 * s) - 6.0 * w * dw / s3;
    }
    Ok(dt)
}

/// Reference Hessian `H(log f)(t)`; independent of `x`.
pub fn hessian_log_f(problem: &Problem, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= MIN_TIME) {
        return Err(Error::NonpositiveTime(t));
    }
    let (n, k, dim) = (problem.n(), problem.k(), problem.dim());
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..k {
        h[(i, i)] = -2.0 / t;
        h[(i, n + i)] = -3.0 / (t * t);
        h[(n + i, i)] = -3.0 / (t * t);
        h[(n + i, n + i)] = -6.0 / (t * t * t);
    }
    for i in k..n {
        h[(i, i)] = -1.0 / (2.0 * t);
    }
    Ok(h)
}

/// `∂t Γ - Σ Γ_{x_i x_i} - Σ x_i Γ_{x_{n+i}}` from the closed-form derivatives.
pub fn pde_residual_analytic(problem: &Problem, p: &SpaceTimePoint, pole: &Pole) -> Result<f64> {
    Ok(pde_residual_relative(problem, p, pole)? * log_kernel_jet(problem, p, pole)?.log_value.exp())
}

/// The residual divided by `Γ`, i.e. the log-form
/// `l_t - Σ (l_ii + l_i²) - Σ x_i l_{n+i}`; usable where `Γ` underflows.
pub fn pde_residual_relative(problem: &Problem, p: &SpaceTimePoint, pole: &Pole) -> Result<f64> {
    let jet = log_kernel_jet(problem, p, pole)?;
    let lt = log_kernel_time_derivative(problem, p, pole)?;
    Ok(log_equation_residual(problem, &p.x, lt, &jet.grad, &jet.hess))
}

/// `l_t - Σ_{i≤n}(l_ii + l_i²) - Σ_{i≤k} x_i l_{n+i}`.
pub(crate) fn log_equation_residual(
    problem: &Problem,
    x: &DVector<f64>,
    lt: f64,
    grad: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> f64 {
    let (n, k) = (problem.n(), problem.k());
    let mut r = lt;
    for i in 0..n {
        r -= hess[(i, i)] + grad[i] * grad[i];
    }
    for i in 0..k {
        r -= x[i] * grad[n + i];
    }
    r
}
