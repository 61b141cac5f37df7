//! Explicit finite differences on a truncated box `[-L, L]^N`, `N ≤ 3`.
//!
//! Forward Euler in time, centred second differences on the diffusive
//! coordinates and first-order upwinding on `x_i ∂_{x_{n+i}}`. With the step
//! bounded by [`Grid::stability_bound`] every update is a convex combination
//! of old values, so positive data stays positive.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harnack::certify_psd;
use crate::kernel::{hessian_log_f, log_kernel_jet, log_kernel_time_derivative};
use crate::problem::{Pole, Problem, SpaceTimePoint};

pub const MAX_DIM: usize = 3;
pub const MIN_POINTS: usize = 8;
/// Fraction of the positivity bound used when the step is chosen automatically.
pub const SAFETY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub problem: Problem,
    pub half_width: f64,
    pub points: usize,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Grid {
    /// Grid with the largest uniform step not exceeding `SAFETY` times the
    /// positivity bound that lands exactly on `t1`.
    pub fn new(problem: Problem, half_width: f64, points: usize, t0: f64, t1: f64) -> Result<Self> {
        Self::validate(&problem, half_width, points, t0, t1)?;
        let h = 2.0 * half_width / (points - 1) as f64;
        let dt_max = SAFETY * positivity_bound(&problem, half_width, h);
        let span = t1 - t0;
        let steps = (span / dt_max).ceil() as usize;
        let dt = if steps == 0 { dt_max } else { span / steps as f64 };
        Ok(Self { problem, half_width, points, t0, t1, dt, steps })
    }

    /// Grid with a caller-chosen step; rejected if it breaks the bound.
    pub fn with_dt(problem: Problem, half_width: f64, points: usize, t0: f64, t1: f64, dt: f64) -> Result<Self> {
        Self::validate(&problem, half_width, points, t0, t1)?;
        let h = 2.0 * half_width / (points - 1) as f64;
        let bound = positivity_bound(&problem, half_width, h);
        if !(dt > 0.0) || dt > bound {
            return Err(Error::CflViolation { dt, bound });
        }
        let steps = ((t1 - t0) / dt).ceil() as usize;
        Ok(Self { problem, half_width, points, t0, t1, dt, steps })
    }

    fn validate(problem: &Problem, half_width: f64, points: usize, t0: f64, t1: f64) -> Result<()> {
        if problem.dim() > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dimension {} exceeds {MAX_DIM}", problem.dim())));
        }
        if points < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_POINTS} points per axis, got {points}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        if !(t0 > 0.0 && t1 >= t0 && t1.is_finite()) {
            return Err(Error::InvalidGrid(format!("need 0 < t0 <= t1, got t0={t0}, t1={t1}")));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// `1 / (2n/h² + kL/h)`: the largest step keeping every update a convex
    /// combination.
    pub fn stability_bound(&self) -> f64 {
        positivity_bound(&self.problem, self.half_width, self.spacing())
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.problem.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis indices of a flat node index (last axis fastest).
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let dim = self.problem.dim();
        let mut idx = vec![0; dim];
        let mut rest = flat;
        for d in (0..dim).rev() {
            idx[d] = rest % self.points;
            rest /= self.points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &j| acc * self.points + j)
    }

    fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.problem.dim() - 1 - axis) as u32)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).into_iter().map(|j| self.coordinate(j)).collect()
    }

    pub fn is_boundary(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&j| j == 0 || j == self.points - 1)
    }

    /// Inside the error sub-box `|x_d| ≤ L/2` for every axis.
    pub fn in_inner_box(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= 0.5 * self.half_width + 1e-12)
    }
}

fn positivity_bound(problem: &Problem, half_width: f64, h: f64) -> f64 {
    1.0 / (2.0 * problem.n() as f64 / (h * h) + problem.k() as f64 * half_width / h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn sample(grid: &Grid, time: f64, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.node(i))).collect();
        Self { values, time }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Spatial part of the discrete operator at an interior node.
fn discrete_operator(grid: &Grid, values: &[f64], flat: usize, x: &[f64]) -> f64 {
    let (n, k) = (grid.problem.n(), grid.problem.k());
    let h = grid.spacing();
    let u = values[flat];
    let mut out = 0.0;
    for d in 0..n {
        let s = grid.stride(d);
        out += (values[flat + s] - 2.0 * u + values[flat - s]) / (h * h);
    }
    for (i, &a) in x.iter().take(k).enumerate() {
        let s = grid.stride(n + i);
        out += if a > 0.0 { a * (values[flat + s] - u) / h } else { a * (u - values[flat - s]) / h };
    }
    out
}

/// One explicit step; boundary nodes take `boundary(x, t + dt)`.
pub fn step(field: &Field, grid: &Grid, boundary: impl Fn(&[f64], f64) -> f64 + Sync) -> Result<Field> {
    if field.values.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: field.values.len() });
    }
    let bound = grid.stability_bound();
    if grid.dt > bound {
        return Err(Error::CflViolation { dt: grid.dt, bound });
    }
    let time = field.time + grid.dt;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let idx = grid.multi_index(i);
            let x: Vec<f64> = idx.iter().map(|&j| grid.coordinate(j)).collect();
            if grid.is_boundary(&idx) {
                boundary(&x, time)
            } else {
                field.values[i] + grid.dt * discrete_operator(grid, &field.values, i, &x)
            }
        })
        .collect();
    // Exact zeros from underflow in the far field are harmless; a negative
    // or NaN value means the scheme lost monotonicity.
    if let Some(&bad) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::NonpositiveField { time, value: bad });
    }
    Ok(Field { values, time })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub linf: f64,
    /// `linf / max |reference|` on the sub-box.
    pub linf_relative: f64,
    pub l2: f64,
    pub l2_relative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub field: Field,
    pub steps: usize,
    /// Smallest value seen over the whole run.
    pub min_value: f64,
    pub errors: Option<ErrorMetrics>,
}

/// Errors against `reference` on the sub-box `|x| ≤ L/2`.
pub fn error_metrics(grid: &Grid, field: &Field, reference: impl Fn(&[f64], f64) -> f64) -> ErrorMetrics {
    let (mut linf, mut ref_max, mut l2, mut ref_l2) = (0.0f64, 0.0f64, 0.0, 0.0);
    for (i, u) in field.values.iter().enumerate() {
        let x = grid.node(i);
        if !grid.in_inner_box(&x) {
            continue;
        }
        let r = reference(&x, field.time);
        let e = (u - r).abs();
        linf = linf.max(e);
        ref_max = ref_max.max(r.abs());
        l2 += e * e;
        ref_l2 += r * r;
    }
    let cell = grid.spacing().powi(grid.problem.dim() as i32);
    ErrorMetrics { linf, linf_relative: linf / ref_max, l2: (l2 * cell).sqrt(), l2_relative: (l2 / ref_l2).sqrt() }
}

/// Exact solution `(x, t) -> u` used for error measurement.
pub type Reference<'a> = dyn Fn(&[f64], f64) -> f64 + Sync + 'a;

pub fn solve(
    grid: &Grid,
    initial: impl Fn(&[f64]) -> f64 + Sync,
    boundary: impl Fn(&[f64], f64) -> f64 + Sync,
    reference: Option<&Reference<'_>>,
) -> Result<SolveOutcome> {
    let mut field = Field::sample(grid, grid.t0, initial);
    let mut min_value = field.min_value();
    for s in 0..grid.steps {
        field = step(&field, grid, &boundary)?;
        if s + 1 == grid.steps {
            // Land exactly on t1 despite accumulated rounding.
            field.time = grid.t1;
        }
        min_value = min_value.min(field.min_value());
    }
    let errors = reference.map(|r| error_metrics(grid, &field, r));
    Ok(SolveOutcome { field, steps: grid.steps, min_value, errors })
}

/// Kernel value `Γ(x, t; pole)`, zero at or before the pole time.
pub fn kernel_value(problem: &Problem, pole: &Pole, x: &[f64], t: f64) -> f64 {
    let p = SpaceTimePoint::new(x.to_vec(), t);
    log_kernel_jet(problem, &p, pole).map(|j| j.log_value.exp()).unwrap_or(0.0)
}

/// `max |L_h Γ - Γ_t| / max Γ` over interior nodes of the sub-box at time `t`.
pub fn consistency_residual(grid: &Grid, pole: &Pole, t: f64) -> Result<f64> {
    let problem = grid.problem;
    let field = Field::sample(grid, t, |x| kernel_value(&problem, pole, x, t));
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..grid.len() {
        let idx = grid.multi_index(i);
        let x: Vec<f64> = idx.iter().map(|&j| grid.coordinate(j)).collect();
        if grid.is_boundary(&idx) || !grid.in_inner_box(&x) {
            continue;
        }
        let p = SpaceTimePoint::new(x.clone(), t);
        let dt_log = log_kernel_time_derivative(&problem, &p, pole)?;
        let u = field.values[i];
        worst = worst.max((discrete_operator(grid, &field.values, i, &x) - u * dt_log).abs());
        scale = scale.max(u);
    }
    Ok(worst / scale)
}

/// Finite-difference `H(log u)` at the grid centre (odd `points` only).
pub fn center_log_hessian(grid: &Grid, field: &Field) -> Result<DMatrix<f64>> {
    if grid.points.is_multiple_of(2) {
        return Err(Error::InvalidGrid("centre node needs an odd point count".into()));
    }
    let dim = grid.problem.dim();
    let h = grid.spacing();
    let c = grid.flat_index(&vec![grid.points / 2; dim]);
    let l = |flat: usize| field.values[flat].ln();
    let mut hess = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        let sa = grid.stride(a);
        hess[(a, a)] = (l(c + sa) - 2.0 * l(c) + l(c - sa)) / (h * h);
        for b in 0..a {
            let sb = grid.stride(b);
            let v = (l(c + sa + sb) - l(c + sa - sb) - l(c - sa + sb) + l(c - sa - sb)) / (4.0 * h * h);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    Ok(hess)
}

/// Minimal eigenvalue of `H(log u) - H(log f)` at the grid centre.
pub fn center_harnack_min_eig(grid: &Grid, field: &Field) -> Result<f64> {
    let m = center_log_hessian(grid, field)? - hessian_log_f(&grid.problem, field.time)?;
    Ok(certify_psd(&m, 0.0)?.min_eigenvalue)
}

/// CSV rows `x_1,…,x_N,u` for the nodes whose axes in `fixed` sit at the
/// given indices.
pub fn csv_slice(grid: &Grid, field: &Field, fixed: &[(usize, usize)]) -> Result<String> {
    let dim = grid.problem.dim();
    if fixed.iter().any(|&(axis, j)| axis >= dim || j >= grid.points) {
        return Err(Error::InvalidArgument("slice axis or index out of range".into()));
    }
    let mut out = String::new();
    let header: Vec<String> = (1..=dim).map(|d| format!("x{d}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",u\n");
    for i in 0..grid.len() {
        let idx = grid.multi_index(i);
        if fixed.iter().any(|&(axis, j)| idx[axis] != j) {
            continue;
        }
        for j in &idx {
            out.push_str(&format!("{},", grid.coordinate(*j)));
        }
        out.push_str(&format!("{}\n", field.values[i]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub points: usize,
    pub spacing: f64,
    pub dt: f64,
    pub steps: usize,
    pub linf_relative: f64,
    pub l2_relative: f64,
    pub min_value: f64,
    pub center_min_eig: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub problem: Problem,
    pub half_width: f64,
    pub t0: f64,
    pub t1: f64,
    pub pole_time: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `log(e_j / e_{j+1}) / log(h_j / h_{j+1})` for consecutive rows.
    pub orders: Vec<f64>,
    pub positive: bool,
    pub monotone: bool,
}

impl ConvergenceReport {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Kernel benchmark: start from `Γ(·, t0; pole)` with exact Dirichlet data
/// and compare with `Γ(·, t1; pole)` on each grid of the ladder.
pub fn convergence_study(
    problem: Problem,
    pole: &Pole,
    half_width: f64,
    ladder: &[usize],
    t0: f64,
    t1: f64,
) -> Result<ConvergenceReport> {
    problem.check_len(pole.xi.len())?;
    let exact = |x: &[f64], t: f64| kernel_value(&problem, pole, x, t);
    let mut rows = Vec::with_capacity(ladder.len());
    for &m in ladder {
        let grid = Grid::new(problem, half_width, m, t0, t1)?;
        let out = solve(&grid, |x| exact(x, t0), exact, Some(&exact))?;
        let errors = out.errors.expect("reference supplied");
        let center_min_eig = if m % 2 == 1 && pole.tau <= 0.0 && pole.xi.iter().all(|v| *v == 0.0) {
            Some(center_harnack_min_eig(&grid, &out.field)?)
        } else {
            None
        };
        rows.push(ConvergenceRow {
            points: m,
            spacing: grid.spacing(),
            dt: grid.dt,
            steps: out.steps,
            linf_relative: errors.linf_relative,
            l2_relative: errors.l2_relative,
            min_value: out.min_value,
            center_min_eig,
        });
    }
    let orders = rows
        .windows(2)
        .map(|w| (w[0].linf_relative / w[1].linf_relative).ln() / (w[0].spacing / w[1].spacing).ln())
        .collect();
    let positive = rows.iter().all(|r| r.min_value >= 0.0);
    let monotone = rows.windows(2).all(|w| w[1].linf_relative <= w[0].linf_relative);
    Ok(ConvergenceReport { problem, half_width, t0, t1, pole_time: pole.tau, rows, orders, positive, monotone })
}

/// Gradient-free helper for tests: exact values of a smooth function on the
/// grid as a vector.
pub fn sample_vector(grid: &Grid, time: f64, f: impl Fn(&[f64]) -> f64 + Sync) -> DVector<f64> {
    DVector::from_vec(Field::sample(grid, time, f).values)
}
