//! Admissible paths and the action behind the two-point bound.
//!
//! A path is admissible when `dx_{n+i}/dt = -x_i` for `i ≤ k`. Minimizing
//! `∫ Σ_{i≤n} (dx_i/dt)² dt` between `(p, t1)` and `(q, t2)` over admissible
//! paths fixes `∫ x_i dt = -(q_{n+i} - p_{n+i})`; the minimizer is an affine
//! interpolant plus a parabolic bump `x̂_i = c_i (t2 - t)(t - t1)` on the
//! first `k` components.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixture::MixtureSolution;
use crate::problem::{Problem, SpaceTimePoint};
use crate::qp::{solve_tridiagonal_kkt, TridiagonalSpd};
use crate::quadrature::GaussLegendre;

const QUADRATURE_NODES: usize = 64;

fn check_endpoints(problem: &Problem, p: &DVector<f64>, t1: f64, q: &DVector<f64>, t2: f64) -> Result<()> {
    problem.check_len(p.len())?;
    problem.check_len(q.len())?;
    if !(t1 < t2) || !t1.is_finite() || !t2.is_finite() {
        return Err(Error::BadTimes { t1, t2 });
    }
    Ok(())
}

/// Required value of `∫_{t1}^{t2} x̂_i dt`, i.e.
/// `-(q_{n+i} - p_{n+i}) - ½(q_i + p_i)(t2 - t1)`.
fn bump_integral(problem: &Problem, p: &DVector<f64>, q: &DVector<f64>, dt: f64, i: usize) -> f64 {
    let n = problem.n();
    -(q[n + i] - p[n + i]) - 0.5 * (q[i] + p[i]) * dt
}

/// Closed-form optimal path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPlan {
    pub problem: Problem,
    pub p: DVector<f64>,
    pub t1: f64,
    pub q: DVector<f64>,
    pub t2: f64,
    /// `c_i` in `x̂_i(t) = c_i (t2 - t)(t - t1)`; zero for `i ≥ k`.
    pub hat_coeffs: Vec<f64>,
    pub action: f64,
}

pub fn optimal_path(problem: &Problem, p: &DVector<f64>, t1: f64, q: &DVector<f64>, t2: f64) -> Result<PathPlan> {
    check_endpoints(problem, p, t1, q, t2)?;
    let dt = t2 - t1;
    let hat_coeffs = (0..problem.n())
        .map(|i| if i < problem.k() { 6.0 / (dt * dt * dt) * bump_integral(problem, p, q, dt, i) } else { 0.0 })
        .collect();
    Ok(PathPlan {
        problem: *problem,
        p: p.clone(),
        t1,
        q: q.clone(),
        t2,
        hat_coeffs,
        action: action_closed_form(problem, p, t1, q, t2)?,
    })
}

/// `Σ_{i≤n} (q_i-p_i)²/Δ + 12/Δ³ Σ_{i≤k} [q_{n+i}-p_{n+i} + ½(q_i+p_i)Δ]²`.
pub fn action_closed_form(problem: &Problem, p: &DVector<f64>, t1: f64, q: &DVector<f64>, t2: f64) -> Result<f64> {
    check_endpoints(problem, p, t1, q, t2)?;
    let dt = t2 - t1;
    let mut a = 0.0;
    for i in 0..problem.n() {
        let d = q[i] - p[i];
        a += d * d / dt;
    }
    for i in 0..problem.k() {
        let w = bump_integral(problem, p, q, dt, i);
        a += 12.0 * w * w / (dt * dt * dt);
    }
    Ok(a)
}

impl PathPlan {
    pub fn duration(&self) -> f64 {
        self.t2 - self.t1
    }

    pub fn hat(&self, i: usize, t: f64) -> f64 {
        self.hat_coeffs[i] * (self.t2 - t) * (t - self.t1)
    }

    pub fn hat_velocity(&self, i: usize, t: f64) -> f64 {
        self.hat_coeffs[i] * (self.t1 + self.t2 - 2.0 * t)
    }

    /// Straight line from `p_i` at `t1` to `q_i` at `t2`.
    pub fn affine(&self, i: usize, t: f64) -> f64 {
        self.p[i] + (self.q[i] - self.p[i]) * (t - self.t1) / self.duration()
    }

    /// Position of all `N` coordinates; the transported ones come from
    /// integrating `dx_{n+i}/dt = -x_i` from `p_{n+i}` in closed form.
    pub fn position(&self, t: f64) -> DVector<f64> {
        let (n, k) = (self.problem.n(), self.problem.k());
        let dt = self.duration();
        let s = t - self.t1;
        let mut x = DVector::zeros(self.problem.dim());
        for i in 0..n {
            x[i] = self.hat(i, t) + self.affine(i, t);
        }
        for i in 0..k {
            let hat_int = self.hat_coeffs[i] * (dt * s * s / 2.0 - s * s * s / 3.0);
            let line_int = self.p[i] * s + (self.q[i] - self.p[i]) * s * s / (2.0 * dt);
            x[n + i] = self.p[n + i] - hat_int - line_int;
        }
        x
    }

    /// Velocities of all `N` coordinates.
    pub fn velocity(&self, t: f64) -> DVector<f64> {
        let (n, k) = (self.problem.n(), self.problem.k());
        let mut v = DVector::zeros(self.problem.dim());
        let x = self.position(t);
        for i in 0..n {
            v[i] = self.hat_velocity(i, t) + (self.q[i] - self.p[i]) / self.duration();
        }
        for i in 0..k {
            v[n + i] = -x[i];
        }
        v
    }

    /// `∫ Σ_{i≤n} (dx_i/dt)² dt` by 64-node Gauss–Legendre (exact here).
    pub fn action_by_quadrature(&self) -> f64 {
        let n = self.problem.n();
        GaussLegendre::new(QUADRATURE_NODES).integrate(self.t1, self.t2, |t| {
            let v = self.velocity(t);
            (0..n).map(|i| v[i] * v[i]).sum()
        })
    }

    /// Evenly spaced samples `(t, x(t))`, endpoints included.
    pub fn sample(&self, count: usize) -> Vec<(f64, DVector<f64>)> {
        let count = count.max(2);
        (0..count)
            .map(|j| {
                let t =
                    if j + 1 == count { self.t2 } else { self.t1 + self.duration() * j as f64 / (count - 1) as f64 };
                (t, self.position(t))
            })
            .collect()
    }
}

/// Discrete minimizer from [`minimize_action_numeric`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePath {
    pub action: f64,
    pub times: Vec<f64>,
    /// Node values of all `N` coordinates.
    pub nodes: Vec<DVector<f64>>,
}

/// Minimizes the action over continuous piecewise-linear `x_1 .. x_n` on a
/// uniform grid with `steps` cells. For piecewise-linear paths both the action
/// and the integral constraints are exact sums, so this is an
/// equality-constrained QP per component, solved through its KKT system.
pub fn minimize_action_numeric(
    problem: &Problem,
    p: &DVector<f64>,
    t1: f64,
    q: &DVector<f64>,
    t2: f64,
    steps: usize,
) -> Result<DiscretePath> {
    check_endpoints(problem, p, t1, q, t2)?;
    if steps < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 steps, got {steps}")));
    }
    let (n, k) = (problem.n(), problem.k());
    let dt = t2 - t1;
    let h = dt / steps as f64;
    let interior = steps - 1;
    let times: Vec<f64> = (0..=steps).map(|j| t1 + dt * j as f64 / steps as f64).collect();

    // ½ yᵀ Q y + cᵀ y + const = (1/h) Σ (z_{j+1} - z_j)², z_0 = p_i, z_S = q_i.
    let hess = TridiagonalSpd::factor(&vec![4.0 / h; interior], &vec![-2.0 / h; interior - 1])?;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(problem.dim());
    let mut action = 0.0;
    for i in 0..n {
        let (left, right) = (p[i], q[i]);
        let mut c = DVector::zeros(interior);
        c[0] -= 2.0 * left / h;
        c[interior - 1] -= 2.0 * right / h;
        let (rows, rhs) = if i < k {
            // h (Σ y_j + (z_0 + z_S)/2) = -(q_{n+i} - p_{n+i})
            let target = -(q[n + i] - p[n + i]) - 0.5 * h * (left + right);
            (vec![DVector::from_element(interior, h)], DVector::from_element(1, target))
        } else {
            (Vec::new(), DVector::zeros(0))
        };
        let sol = solve_tridiagonal_kkt(&hess, &c, &rows, &rhs)?;
        let mut col = Vec::with_capacity(steps + 1);
        col.push(left);
        col.extend(sol.z.iter().copied());
        col.push(right);
        action += col.windows(2).map(|w| (w[1] - w[0]).powi(2) / h).sum::<f64>();
        columns.push(col);
    }
    for i in 0..k {
        let mut col = Vec::with_capacity(steps + 1);
        let mut acc = p[n + i];
        col.push(acc);
        for j in 0..steps {
            acc -= 0.5 * h * (columns[i][j] + columns[i][j + 1]);
            col.push(acc);
        }
        columns.push(col);
    }
    let nodes = (0..=steps).map(|j| DVector::from_iterator(problem.dim(), columns.iter().map(|c| c[j]))).collect();
    Ok(DiscretePath { action, times, nodes })
}

/// Both sides of
/// `l(q,t2) ≥ l(p,t1) - (n+3k)/2 log(t2/t1) - ¼ ∫ Σ (dx_i/dt)² dt`
/// along `plan`, plus a pointwise check of the integrand bound
/// `dl/dt ≥ -(n+3k)/(2t) - ¼ Σ (dx_i/dt)²` at the quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathHarnack {
    pub lhs: f64,
    pub rhs: f64,
    /// `min (dl/dt - bound)` over the nodes; `dl/dt` uses a differenced `l_t`.
    pub min_pointwise_slack: f64,
}

pub fn integrate_harnack_along_path(sol: &MixtureSolution, plan: &PathPlan) -> Result<PathHarnack> {
    let problem = sol.problem();
    if problem != &plan.problem {
        return Err(Error::InvalidArgument("path and solution use different problems".into()));
    }
    if !sol.contains_time(plan.t1) || !sol.contains_time(plan.t2) || plan.t1 <= 0.0 {
        return Err(Error::OutOfDomain { t: plan.t1, t_min: sol.t_domain().0, t_max: sol.t_domain().1 });
    }
    let n = problem.n();
    let lhs = sol.log_u(&SpaceTimePoint { x: plan.q.clone(), t: plan.t2 })?;
    let lp = sol.log_u(&SpaceTimePoint { x: plan.p.clone(), t: plan.t1 })?;
    let rhs = lp - problem.time_exponent() * (plan.t2 / plan.t1).ln() - 0.25 * plan.action;

    let mut min_slack = f64::INFINITY;
    let gl = GaussLegendre::new(16);
    for (t, _) in gl.mapped(plan.t1, plan.t2) {
        let pt = SpaceTimePoint { x: plan.position(t), t };
        let jet = sol.solution_jet(&pt)?;
        let lt = sol.log_time_derivative(&pt)?;
        let v = plan.velocity(t);
        let dl = lt + jet.grad_log.dot(&v);
        let speed2: f64 = (0..n).map(|i| v[i] * v[i]).sum();
        let bound = -problem.time_exponent() / t - 0.25 * speed2;
        min_slack = min_slack.min(dl - bound);
    }
    Ok(PathHarnack { lhs, rhs, min_pointwise_slack: min_slack })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn worked_example_n1_k1() {
        let pr = Problem::new(1, 1).unwrap();
        let plan = optimal_path(&pr, &v(&[0.0, 0.0]), 1.0, &v(&[1.0, 0.0]), 2.0).unwrap();
        assert!((plan.action - 4.0).abs() < 1e-14);
        for t in [1.0, 1.25, 1.5, 1.9, 2.0] {
            assert!((plan.hat(0, t) + 3.0 * (2.0 - t) * (t - 1.0)).abs() < 1e-14);
            assert!((plan.position(t)[0] - (plan.hat(0, t) + t - 1.0)).abs() < 1e-14);
        }
        assert!((plan.action_by_quadrature() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_endpoints_give_zero_path() {
        let pr = Problem::new(2, 1).unwrap();
        let z = DVector::zeros(3);
        let plan = optimal_path(&pr, &z, 0.5, &z, 1.5).unwrap();
        assert_eq!(plan.action, 0.0);
        assert!(plan.sample(11).iter().all(|(_, x)| x.amax() == 0.0));
        let num = minimize_action_numeric(&pr, &z, 0.5, &z, 1.5, 64).unwrap();
        assert!(num.action <= 1e-20);
    }

    #[test]
    fn endpoints_and_affine_form() {
        let pr = Problem::new(2, 1).unwrap();
        let (p, q) = (v(&[0.3, -1.0, 2.0]), v(&[-0.7, 0.4, 1.1]));
        let (t1, t2) = (0.4, 1.7);
        let plan = optimal_path(&pr, &p, t1, &q, t2).unwrap();
        assert!((plan.position(t1) - &p).amax() < 1e-14);
        assert!((plan.position(t2) - &q).amax() < 1e-12);
        for t in [0.5, 1.0, 1.6] {
            for i in 0..2 {
                let displayed = (q[i] - p[i]) / (t2 - t1) * t + (p[i] * t2 - q[i] * t1) / (t2 - t1);
                assert!((plan.affine(i, t) - displayed).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bad_times_and_steps() {
        let pr = Problem::new(1, 1).unwrap();
        let z = DVector::zeros(2);
        assert!(matches!(optimal_path(&pr, &z, 1.0, &z, 1.0), Err(Error::BadTimes { .. })));
        assert!(matches!(action_closed_form(&pr, &z, 2.0, &z, 1.0), Err(Error::BadTimes { .. })));
        assert!(matches!(minimize_action_numeric(&pr, &z, 2.0, &z, 1.0, 64), Err(Error::BadTimes { .. })));
        assert!(minimize_action_numeric(&pr, &z, 0.0, &z, 1.0, 15).is_err());
    }
}
