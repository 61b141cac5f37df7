//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use ultraharnack::{Pole, Problem, SpaceTimePoint};

/// Displayed closed form of the kernel, written out term by term.
pub fn kernel_direct(problem: &Problem, x: &DVector<f64>, t: f64, xi: &DVector<f64>, tau: f64) -> f64 {
    let (n, k) = (problem.n(), problem.k());
    let s = t - tau;
    if s <= 0.0 {
        return 0.0;
    }
    let c = (3f64.sqrt() / (2.0 * PI)).powi(k as i32) * (4.0 * PI).powf(-((n - k) as f64) / 2.0);
    let mut e = 0.0;
    for i in 0..n {
        e -= (x[i] - xi[i]).powi(2) / (4.0 * s);
    }
    for i in 0..k {
        e -= 3.0 / s.powi(3) * (x[n + i] - xi[n + i] + 0.5 * (x[i] + xi[i]) * s).powi(2);
    }
    c / s.powf((n + 3 * k) as f64 / 2.0) * e.exp()
}

pub fn log_kernel_direct(problem: &Problem, x: &DVector<f64>, t: f64, xi: &DVector<f64>, tau: f64) -> f64 {
    kernel_direct(problem, x, t, xi, tau).ln()
}

/// Central-difference gradient with step `h`.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

/// Central-difference Hessian with step `h`.
pub fn fd_hessian(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let dim = x.len();
    let shifted = |i: usize, di: f64, j: usize, dj: f64| {
        let mut y = x.clone();
        y[i] += di;
        y[j] += dj;
        f(&y)
    };
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            (shifted(i, h, i, 0.0) - 2.0 * f(x) + shifted(i, -h, i, 0.0)) / (h * h)
        } else {
            (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) + shifted(i, -h, j, -h)) / (4.0 * h * h)
        }
    })
}

/// `H(log f)(t)` entry by entry from the displayed list.
pub fn reference_hessian(problem: &Problem, t: f64) -> DMatrix<f64> {
    let (n, k) = (problem.n(), problem.k());
    DMatrix::from_fn(problem.dim(), problem.dim(), |a, b| {
        let (i, j) = (a.min(b), a.max(b));
        if i == j && i < k {
            -2.0 / t
        } else if i == j && i < n {
            -1.0 / (2.0 * t)
        } else if i == j {
            -6.0 / t.powi(3)
        } else if i < k && j == n + i {
            -3.0 / (t * t)
        } else {
            0.0
        }
    })
}

/// The caloric polynomial written out as a plain sum.
pub fn caloric_direct(problem: &Problem, x: &DVector<f64>, t: f64) -> f64 {
    let (n, k) = (problem.n(), problem.k());
    let mut v = 0.0;
    for i in 0..k {
        v += t * t * x[i] * x[i];
    }
    for i in 0..problem.dim() {
        v += x[i] * x[i];
    }
    let mut cross = n as f64;
    for i in 0..k {
        cross += x[i] * x[n + i];
    }
    v + 2.0 * t * cross + 2.0 * k as f64 / 3.0 * t.powi(3)
}

pub fn point(x: &DVector<f64>, t: f64) -> SpaceTimePoint {
    SpaceTimePoint { x: x.clone(), t }
}

pub fn pole(xi: &DVector<f64>, tau: f64) -> Pole {
    Pole { xi: xi.clone(), tau }
}

pub fn all_problems(max_n: usize) -> Vec<Problem> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        for k in 1..=n {
            out.push(Problem::new(n, k).unwrap());
        }
    }
    out
}
