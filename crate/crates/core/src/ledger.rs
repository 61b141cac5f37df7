//! Algebra of the maximum-principle argument.
//!
//! The perturbed defect is `M̃ = H(log ũ) + R(t)` where `R(t)` carries
//! `2α/t`, `(1+σ)/(2t)`, `6γ/t³` on the diagonal and `3β/t²` at `(i, n+i)`,
//! with `α = 1+σδ₀`, `β = 1+σθ₀`, `γ = 1+σγ₀`. At a first null vector `V` of
//! `M̃` the reaction term `Ñ(V,V)` collapses to a quadratic form in
//! `(v_i, v_{n+i})` whose positivity is governed by
//! `F = (4α²-α-3β)(β²-γ) - (2αβ-β-γ)²`, and `F ≈ ½ vᵀ C₀ v σ²`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MIN_TIME;
use crate::mixture::MixtureSolution;
use crate::problem::{Problem, SpaceTimePoint};
use crate::sampling;

const C0_ENTRIES: [[i64; 3]; 3] = [[-8, 10, -3], [10, -14, 5], [-3, 5, -2]];

/// Geometric σ grid used by [`sigma_window`].
pub const SIGMA_GRID_MIN: f64 = 1e-8;
pub const SIGMA_GRID_MAX: f64 = 1.0;

pub fn c0_matrix() -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| C0_ENTRIES[i][j] as f64)
}

/// Determinant of `C₀` in exact integer arithmetic.
pub fn c0_determinant() -> i64 {
    let m = C0_ENTRIES;
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct C0Spectrum {
    /// Ascending.
    pub eigenvalues: Vector3<f64>,
    /// Unit eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: Matrix3<f64>,
}

pub fn c0_spectrum() -> C0Spectrum {
    let eig = c0_matrix().symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    C0Spectrum {
        eigenvalues: Vector3::from_fn(|i, _| eig.eigenvalues[order[i]]),
        eigenvectors: Matrix3::from_fn(|r, c| eig.eigenvectors[(r, order[c])]),
    }
}

/// Unit eigenvector `(δ₀, θ₀, η₀)` of the positive eigenvalue, oriented so
/// that `2θ₀ ≥ η₀`.
pub fn choose_eigenvector() -> Result<(f64, Vector3<f64>)> {
    let spectrum = c0_spectrum();
    let positive: Vec<usize> = (0..3).filter(|&i| spectrum.eigenvalues[i] > 0.0).collect();
    let &[idx] = positive.as_slice() else {
        return Err(Error::DegenerateEigenvector);
    };
    let mut v: Vector3<f64> = spectrum.eigenvectors.column(idx).into_owned();
    v /= v.norm();
    if 2.0 * v[1] < v[2] {
        v = -v;
    }
    if v[1].abs() < 1e-12 && (2.0 * v[1] - v[2]).abs() < 1e-12 {
        return Err(Error::DegenerateEigenvector);
    }
    Ok((spectrum.eigenvalues[idx], v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbParams {
    pub sigma: f64,
    pub delta0: f64,
    pub theta0: f64,
    pub eta0: f64,
}

impl PerturbParams {
    pub fn new(sigma: f64, direction: &Vector3<f64>) -> Self {
        Self { sigma, delta0: direction[0], theta0: direction[1], eta0: direction[2] }
    }

    /// `σ = 0`: `α = β = γ = 1`.
    pub fn unperturbed() -> Self {
        Self::new(0.0, &Vector3::zeros())
    }

    pub fn alpha(&self) -> f64 {
        1.0 + self.sigma * self.delta0
    }

    pub fn beta(&self) -> f64 {
        1.0 + self.sigma * self.theta0
    }

    pub fn gamma(&self) -> f64 {
        1.0 + self.sigma * self.eta0
    }

    pub fn direction(&self) -> Vector3<f64> {
        Vector3::new(self.delta0, self.theta0, self.eta0)
    }
}

/// `F = (4α²-α-3β)(β²-γ) - (2αβ-β-γ)²`.
pub fn f_poly(params: &PerturbParams) -> f64 {
    let (a, b, g) = (params.alpha(), params.beta(), params.gamma());
    (4.0 * a * a - a - 3.0 * b) * (b * b - g) - (2.0 * a * b - b - g).powi(2)
}

/// `½ vᵀ C₀ v`, the `σ²` coefficient of `F`.
pub fn f_leading_coefficient(v: &Vector3<f64>) -> f64 {
    0.5 * v.dot(&(c0_matrix() * v))
}

/// Estimates `lim_{σ→0} F/σ²` from `σ, σ/10, σ/100` with two Richardson
/// levels (the quotient has error `O(σ)`).
pub fn richardson_leading_coefficient(v: &Vector3<f64>, sigma: f64) -> f64 {
    let g = |s: f64| f_poly(&PerturbParams::new(s, v)) / (s * s);
    let (a, b, c) = (g(sigma), g(sigma / 10.0), g(sigma / 100.0));
    let r1 = (10.0 * b - a) / 9.0;
    let r2 = (10.0 * c - b) / 9.0;
    (100.0 * r2 - r1) / 99.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaWindow {
    pub sigma1: f64,
    /// `F > 0` at every grid point, so `sigma1` is just the grid's end.
    pub exhausted: bool,
    pub resolution: usize,
}

pub fn sigma_grid(resolution: usize) -> Vec<f64> {
    let r = resolution.max(2);
    let ratio = (SIGMA_GRID_MAX / SIGMA_GRID_MIN).ln();
    let mut grid: Vec<f64> = (0..r).map(|j| SIGMA_GRID_MIN * (ratio * j as f64 / (r - 1) as f64).exp()).collect();
    grid[r - 1] = SIGMA_GRID_MAX;
    grid
}

/// Largest grid `σ₁` such that `F > 0` at every grid point in `(0, σ₁]`.
pub fn sigma_window(v: &Vector3<f64>, resolution: usize) -> Result<SigmaWindow> {
    let grid = sigma_grid(resolution);
    let positive = |s: f64| f_poly(&PerturbParams::new(s, v)) > 0.0;
    if !positive(grid[0]) {
        return Err(Error::NoPositiveWindow(grid[0]));
    }
    let last_ok = grid.iter().take_while(|&&s| positive(s)).count() - 1;
    Ok(SigmaWindow { sigma1: grid[last_ok], exhausted: last_ok + 1 == grid.len(), resolution: grid.len() })
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= MIN_TIME) {
        return Err(Error::NonpositiveTime(t));
    }
    Ok(())
}

/// `R(t)`: diagonal `2α/t` (first k), `(1+σ)/(2t)` (next n-k), `6γ/t³`
/// (last k); `3β/t²` at `(i, n+i)` and `(n+i, i)`.
pub fn reference_matrix(problem: &Problem, t: f64, params: &PerturbParams) -> Result<DMatrix<f64>> {
    check_time(t)?;
    let (n, k, dim) = (problem.n(), problem.k(), problem.dim());
    let mut r = DMatrix::zeros(dim, dim);
    for i in 0..k {
        r[(i, i)] = 2.0 * params.alpha() / t;
        r[(i, n + i)] = 3.0 * params.beta() / (t * t);
        r[(n + i, i)] = 3.0 * params.beta() / (t * t);
        r[(n + i, n + i)] = 6.0 * params.gamma() / (t * t * t);
    }
    for i in k..n {
        r[(i, i)] = (1.0 + params.sigma) / (2.0 * t);
    }
    Ok(r)
}

/// `M̃ = H + R(t)`.
pub fn mtilde_build(problem: &Problem, h: &DMatrix<f64>, t: f64, params: &PerturbParams) -> Result<DMatrix<f64>> {
    problem.check_len(h.nrows())?;
    Ok(h + reference_matrix(problem, t, params)?)
}

/// Row values forced by `M̃ V = 0`, i.e. `-R(t) V`.
pub fn prescribed_rows(problem: &Problem, v: &DVector<f64>, t: f64, params: &PerturbParams) -> Result<DVector<f64>> {
    problem.check_len(v.len())?;
    check_time(t)?;
    let (n, k) = (problem.n(), problem.k());
    let (a, b, g) = (params.alpha(), params.beta(), params.gamma());
    let mut r = DVector::zeros(problem.dim());
    for i in 0..k {
        r[i] = -2.0 * a / t * v[i] - 3.0 * b / (t * t) * v[n + i];
        r[n + i] = -3.0 * b / (t * t) * v[i] - 6.0 * g / (t * t * t) * v[n + i];
    }
    for i in k..n {
        r[i] = -(1.0 + params.sigma) / (2.0 * t) * v[i];
    }
    Ok(r)
}

/// Symmetric `H` with `H V = r`: the rank-two completion along `V̂ = V/|V|`
/// plus `P S P`, `P = I - V̂ V̂ᵀ`, which is free on the complement of `V`.
pub fn surrogate_hessian(v: &DVector<f64>, r: &DVector<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = v.len();
    let norm = v.norm();
    let vh = v / norm;
    let rh = r / norm;
    let proj = DMatrix::identity(dim, dim) - &vh * vh.transpose();
    let mut h = &rh * vh.transpose() + &vh * rh.transpose() - (&vh * vh.transpose()) * vh.dot(&rh);
    h += &proj * s * &proj;
    crate::mixture::symmetrize(&mut h);
    h
}

/// The reference terms subtracted in `Ñ(V,V)`:
/// `2α/t² Σv_i² + 12β/t³ Σv_i v_{n+i} + (1+σ)/(2t²) Σ_{k<i≤n} v_i² + 18γ/t⁴ Σv_{n+i}²`.
fn n_form_reference(problem: &Problem, v: &DVector<f64>, t: f64, params: &PerturbParams, absolute: bool) -> f64 {
    let (n, k) = (problem.n(), problem.k());
    let (a, b, g) = (params.alpha(), params.beta(), params.gamma());
    let f = |x: f64| if absolute { x.abs() } else { x };
    let t2 = t * t;
    let mut s = 0.0;
    for i in 0..k {
        s += f(2.0 * a / t2 * v[i] * v[i]);
        s += f(12.0 * b / (t2 * t) * v[i] * v[n + i]);
        s += f(18.0 * g / (t2 * t2) * v[n + i] * v[n + i]);
    }
    for i in k..n {
        s += f((1.0 + params.sigma) / (2.0 * t2) * v[i] * v[i]);
    }
    s
}

/// `Ñ(V,V)` from the rows of `H`:
/// `2 Σ_{i≤n} (H_i·V)² + 2 Σ_{i≤k} v_i (H_{n+i}·V) - reference terms`.
pub fn n_form_rowwise(
    problem: &Problem,
    h: &DMatrix<f64>,
    t: f64,
    params: &PerturbParams,
    v: &DVector<f64>,
) -> Result<f64> {
    problem.check_len(v.len())?;
    problem.check_len(h.nrows())?;
    check_time(t)?;
    let (n, k) = (problem.n(), problem.k());
    let hv = h * v;
    let mut s = 0.0;
    for i in 0..n {
        s += 2.0 * hv[i] * hv[i];
    }
    for i in 0..k {
        s += 2.0 * v[i] * hv[n + i];
    }
    Ok(s - n_form_reference(problem, v, t, params, false))
}

/// Closed form of `Ñ(V,V)` under `H V = prescribed_rows(V)`:
/// `2{(4α²-α-3β)/t² Σv_i² + 6(2αβ-β-γ)/t³ Σv_i v_{n+i} + 9(β²-γ)/t⁴ Σv_{n+i}²}
///  + (σ²+σ)/(2t²) Σ_{k<i≤n} v_i²`.
pub fn n_form_closed(problem: &Problem, v: &DVector<f64>, t: f64, params: &PerturbParams) -> Result<f64> {
    problem.check_len(v.len())?;
    check_time(t)?;
    let (n, k) = (problem.n(), problem.k());
    let (a, b, g, s) = (params.alpha(), params.beta(), params.gamma(), params.sigma);
    let (mut vv, mut vw, mut ww, mut free) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..k {
        vv += v[i] * v[i];
        vw += v[i] * v[n + i];
        ww += v[n + i] * v[n + i];
    }
    for i in k..n {
        free += v[i] * v[i];
    }
    let t2 = t * t;
    Ok(2.0
        * ((4.0 * a * a - a - 3.0 * b) / t2 * vv
            + 6.0 * (2.0 * a * b - b - g) / (t2 * t) * vw
            + 9.0 * (b * b - g) / (t2 * t2) * ww)
        + (s * s + s) / (2.0 * t2) * free)
}

/// Rounding scale for comparing the two forms of `Ñ(V,V)`: the magnitude
/// of the reference terms that cancel in the closed form.
pub fn n_form_scale(problem: &Problem, v: &DVector<f64>, t: f64, params: &PerturbParams) -> f64 {
    n_form_reference(problem, v, t, params, true)
}

/// `Ñ` assembled block by block (`P̃₁..P̃₄` inside `Ñ₁`, then `Ñ₂`,
/// `Ñ₃ = Ñ₂ᵀ`, `Ñ₄`) with `H` standing for the Hessian of `log ũ`.
pub fn n_tilde(problem: &Problem, h: &DMatrix<f64>, t: f64, params: &PerturbParams) -> Result<DMatrix<f64>> {
    problem.check_len(h.nrows())?;
    check_time(t)?;
    let (n, k, dim) = (problem.n(), problem.k(), problem.dim());
    let (a, b, g) = (params.alpha(), params.beta(), params.gamma());
    let t2 = t * t;
    // 2 Σ_{i≤n} H_{ai} H_{bi}
    let quad = |r: usize, c: usize| -> f64 { 2.0 * (0..n).map(|i| h[(r, i)] * h[(c, i)]).sum::<f64>() };
    let mut out = DMatrix::zeros(dim, dim);

    // P̃₁: k × k
    for r in 0..k {
        for c in 0..k {
            let mut v = quad(r, c) + h[(n + r, c)] + h[(r, n + c)];
            if r == c {
                v -= 2.0 * a / t2;
            }
            out[(r, c)] = v;
        }
    }
    // P̃₂: k × (n-k), P̃₃ = P̃₂ᵀ
    for r in 0..k {
        for c in k..n {
            let v = quad(r, c) + h[(n + r, c)];
            out[(r, c)] = v;
            out[(c, r)] = v;
        }
    }
    // P̃₄: (n-k) × (n-k)
    for r in k..n {
        for c in k..n {
            let mut v = quad(r, c);
            if r == c {
                v -= (1.0 + params.sigma) / (2.0 * t2);
            }
            out[(r, c)] = v;
        }
    }
    // Ñ₂: n × k in columns n..n+k, Ñ₃ = Ñ₂ᵀ
    for r in 0..n {
        for c in 0..k {
            let mut v = quad(r, n + c);
            if r < k {
                v += h[(n + r, n + c)];
                if r == c {
                    v -= 6.0 * b / (t2 * t);
                }
            }
            out[(r, n + c)] = v;
            out[(n + c, r)] = v;
        }
    }
    // Ñ₄: k × k
    for r in 0..k {
        for c in 0..k {
            let mut v = quad(n + r, n + c);
            if r == c {
                v -= 18.0 * g / (t2 * t2);
            }
            out[(n + r, n + c)] = v;
        }
    }
    Ok(out)
}

pub fn leading_principal_minors(m: &DMatrix<f64>) -> Vec<f64> {
    (1..=m.nrows()).map(|i| m.view((0, 0), (i, i)).determinant()).collect()
}

/// `(1/2t)^i (2/t)^{k-i} (1/2t)^{n-k} (6/t³)^i`, the dominant term of the
/// `(n+i)`-th leading minor as `t → 0`.
pub fn dominant_minor_scale(problem: &Problem, i: usize, t: f64) -> f64 {
    let (n, k) = (problem.n() as i32, problem.k() as i32);
    let i = i as i32;
    (0.5 / t).powi(i) * (2.0 / t).powi(k - i) * (0.5 / t).powi(n - k) * (6.0 / (t * t * t)).powi(i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorScan {
    pub sigma: f64,
    pub bound: f64,
    /// Largest grid time below which every sampled `H` (entries bounded by
    /// `bound`) gives all leading minors of `M̃` positive.
    pub threshold: Option<f64>,
    /// Largest grid time below which `λ_min(R(t)) > N·bound`, which makes
    /// `M̃` positive definite for every such `H`.
    pub certified_threshold: Option<f64>,
    /// `max |minor_{n+i} / dominant - 1|` over the sampled `H` at the
    /// smallest grid time.
    pub dominant_deviation: f64,
}

/// Scan of the small-time dominance: for bounded `‖H‖_max ≤ bound` the
/// leading minors of `M̃ = H + R(t)` are positive once `t` is small.
pub fn minor_positivity_scan(
    problem: &Problem,
    params: &PerturbParams,
    bound: f64,
    t_grid: &[f64],
    seed: u64,
) -> Result<MinorScan> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("t grid must be nonempty and increasing".into()));
    }
    let dim = problem.dim();
    let mut family = vec![
        DMatrix::zeros(dim, dim),
        DMatrix::from_element(dim, dim, bound),
        DMatrix::from_element(dim, dim, -bound),
        DMatrix::identity(dim, dim) * bound,
        DMatrix::identity(dim, dim) * -bound,
    ];
    let mut rng = sampling::stream(seed, 0);
    for _ in 0..32 {
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = if rng.random_bool(0.5) { bound } else { -bound };
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        family.push(h);
    }

    let mut threshold = None;
    let mut certified_threshold = None;
    let mut sampled_ok = true;
    let mut certified_ok = true;
    for &t in t_grid {
        let r = reference_matrix(problem, t, params)?;
        if sampled_ok {
            sampled_ok = family.iter().all(|h| leading_principal_minors(&(h + &r)).iter().all(|m| *m > 0.0));
            if sampled_ok {
                threshold = Some(t);
            }
        }
        if certified_ok {
            let lmin = r.clone().symmetric_eigen().eigenvalues.min();
            certified_ok = lmin > dim as f64 * bound;
            if certified_ok {
                certified_threshold = Some(t);
            }
        }
    }

    let t0 = t_grid[0];
    let r0 = reference_matrix(problem, t0, params)?;
    let n = problem.n();
    let mut dominant_deviation: f64 = 0.0;
    for h in &family {
        let minors = leading_principal_minors(&(h + &r0));
        for i in 1..=problem.k() {
            let ratio = minors[n + i - 1] / dominant_minor_scale(problem, i, t0);
            dominant_deviation = dominant_deviation.max((ratio - 1.0).abs());
        }
    }
    Ok(MinorScan { sigma: params.sigma, bound, threshold, certified_threshold, dominant_deviation })
}

/// Entrywise residual of the evolution equation
/// `M̃_t = Σ_{i≤n} (M̃_ii + 2 l_i M̃_i) + Σ_{i≤k} x_i M̃_{n+i} + Ñ`
/// for `M̃ = H(log u) + R(t)`, with derivatives of the `M̃` field from
/// second-order central differences of step `h`.
pub fn evolution_residual(
    sol: &MixtureSolution,
    params: &PerturbParams,
    p: &SpaceTimePoint,
    step: f64,
) -> Result<DMatrix<f64>> {
    let problem = *sol.problem();
    let (n, k) = (problem.n(), problem.k());
    let field = |x: &DVector<f64>, t: f64| -> Result<DMatrix<f64>> {
        let jet = sol.solution_jet(&SpaceTimePoint { x: x.clone(), t })?;
        mtilde_build(&problem, &jet.hess_log, t, params)
    };
    let jet = sol.solution_jet(p)?;
    let centre = field(&p.x, p.t)?;

    let mut rhs = n_tilde(&problem, &jet.hess_log, p.t, params)?;
    let shifted = |i: usize, d: f64| {
        let mut x = p.x.clone();
        x[i] += d;
        x
    };
    for i in 0..n {
        let plus = field(&shifted(i, step), p.t)?;
        let minus = field(&shifted(i, -step), p.t)?;
        let second = (&plus - &centre * 2.0 + &minus) / (step * step);
        let first = (&plus - &minus) / (2.0 * step);
        rhs += second + first * (2.0 * jet.grad_log[i]);
    }
    for i in 0..k {
        let plus = field(&shifted(n + i, step), p.t)?;
        let minus = field(&shifted(n + i, -step), p.t)?;
        rhs += (plus - minus) / (2.0 * step) * p.x[i];
    }
    let dt = (field(&p.x, p.t + step)? - field(&p.x, p.t - step)?) / (2.0 * step);
    Ok(dt - rhs)
}

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    pub sigma_grid: usize,
    pub trials: usize,
    pub seed: u64,
    pub minor_scan_problem: Problem,
    pub evolution_points: usize,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            sigma_grid: 64,
            trials: 1000,
            seed: 0,
            minor_scan_problem: Problem::new(2, 1).expect("valid"),
            evolution_points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C0Summary {
    pub det: i64,
    pub eigs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub c0: C0Summary,
    pub lambda_plus: f64,
    pub eigenvector: Vec<f64>,
    pub sigma1: f64,
    pub sigma_window_exhausted: bool,
    pub leading_coefficient: f64,
    pub richardson_estimate: f64,
    pub identity_max_err: f64,
    pub block_form_max_err: f64,
    pub minor_thresholds: Vec<MinorScan>,
    pub evolution_residual_max: f64,
}

/// One randomized trial of the `Ñ(V,V)` identities. Returns the relative
/// discrepancies `(closed vs rowwise, block vs rowwise)`.
pub fn identity_trial(seed: u64, index: u64, sigma_max: f64, direction: &Vector3<f64>) -> Result<(f64, f64)> {
    let mut rng = sampling::stream(seed, index);
    let problem = sampling::random_problem(&mut rng, 4);
    let dim = problem.dim();
    let t = sampling::log_uniform(&mut rng, 0.1, 10.0);
    let params = PerturbParams::new(rng.random_range(0.0..sigma_max), direction);
    let v = sampling::uniform_vec(&mut rng, dim, -1.0, 1.0);
    let s = sampling::random_symmetric(&mut rng, dim, 5.0);
    let r = prescribed_rows(&problem, &v, t, &params)?;
    let h = surrogate_hessian(&v, &r, &s);

    let row = n_form_rowwise(&problem, &h, t, &params, &v)?;
    let closed = n_form_closed(&problem, &v, t, &params)?;
    let scale = n_form_scale(&problem, &v, t, &params).max(row.abs()).max(closed.abs());
    let closed_err = (row - closed).abs() / scale;

    // Block form on an unconstrained random H.
    let h_free = sampling::random_symmetric(&mut rng, dim, 5.0);
    let block = v.dot(&(n_tilde(&problem, &h_free, t, &params)? * &v));
    let row_free = n_form_rowwise(&problem, &h_free, t, &params, &v)?;
    let free_scale = 1.0 + block.abs().max(row_free.abs()).max(n_form_scale(&problem, &v, t, &params));
    Ok((closed_err, (block - row_free).abs() / free_scale))
}

pub fn run_ledger(cfg: &LedgerConfig) -> Result<LedgerReport> {
    let spectrum = c0_spectrum();
    let (lambda_plus, v) = choose_eigenvector()?;
    let window = sigma_window(&v, cfg.sigma_grid)?;

    let mut identity_max_err: f64 = 0.0;
    let mut block_form_max_err: f64 = 0.0;
    for i in 0..cfg.trials {
        let (a, b) = identity_trial(cfg.seed, i as u64, window.sigma1, &v)?;
        identity_max_err = identity_max_err.max(a);
        block_form_max_err = block_form_max_err.max(b);
    }

    let t_grid: Vec<f64> = (0..60).map(|j| 1e-4 * 10f64.powf(5.0 * j as f64 / 59.0)).collect();
    let mut minor_thresholds = Vec::new();
    for sigma in [0.0, 0.5 * window.sigma1] {
        for bound in [0.1, 1.0, 10.0] {
            let params = PerturbParams::new(sigma, &v);
            minor_thresholds.push(minor_positivity_scan(&cfg.minor_scan_problem, &params, bound, &t_grid, cfg.seed)?);
        }
    }

    let mut evolution_residual_max: f64 = 0.0;
    for i in 0..cfg.evolution_points {
        let mut rng = sampling::stream(cfg.seed ^ 0x23, i as u64);
        let problem = sampling::random_problem(&mut rng, 3);
        let sol = MixtureSolution::new(
            problem,
            vec![crate::mixture::Component::new(1.0, crate::problem::Pole::origin(&problem))],
            0.0,
        )?;
        let x = sampling::uniform_vec(&mut rng, problem.dim(), -2.0, 2.0);
        let t = rng.random_range(0.5..3.0);
        let res = evolution_residual(&sol, &PerturbParams::unperturbed(), &SpaceTimePoint { x, t }, 1e-3)?;
        evolution_residual_max = evolution_residual_max.max(res.amax());
    }

    Ok(LedgerReport {
        c0: C0Summary { det: c0_determinant(), eigs: spectrum.eigenvalues.iter().copied().collect() },
        lambda_plus,
        eigenvector: v.iter().copied().collect(),
        sigma1: window.sigma1,
        sigma_window_exhausted: window.exhausted,
        leading_coefficient: f_leading_coefficient(&v),
        richardson_estimate: richardson_leading_coefficient(&v, 1e-3),
        identity_max_err,
        block_form_max_err,
        minor_thresholds,
        evolution_residual_max,
    })
}
