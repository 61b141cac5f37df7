//! Equality-constrained quadratic programs
//!
//! ```text
//!     minimize ½ zᵀ Q z + cᵀ z   subject to   A z = b
//! ```
//!
//! solved directly through the KKT system. The dense route factors the full
//! symmetric indefinite KKT matrix; the tridiagonal route eliminates through
//! the range space of `A` using a banded factorization of `Q`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub z: DVector<f64>,
    pub multipliers: DVector<f64>,
}

/// Dense solve of `[[Q, Aᵀ], [A, 0]] [z; λ] = [-c; b]`.
pub fn solve_dense_kkt(q: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<KktSolution> {
    let d = q.nrows();
    let m = a.nrows();
    if q.ncols() != d || c.len() != d || a.ncols() != d || b.len() != m {
        return Err(Error::InvalidArgument("inconsistent KKT block shapes".into()));
    }
    if m > 0 {
        let sv = a.clone().svd(false, false).singular_values;
        let top = sv.max();
        if sv.iter().any(|s| *s <= 1e-12 * top) || top == 0.0 {
            return Err(Error::SingularKkt);
        }
    }
    let mut kkt = DMatrix::zeros(d + m, d + m);
    kkt.view_mut((0, 0), (d, d)).copy_from(q);
    kkt.view_mut((d, 0), (m, d)).copy_from(a);
    kkt.view_mut((0, d), (d, m)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(d + m);
    rhs.rows_mut(0, d).copy_from(&(-c));
    rhs.rows_mut(d, m).copy_from(b);
    let sol = kkt.full_piv_lu().solve(&rhs).ok_or(Error::SingularKkt)?;
    Ok(KktSolution { z: sol.rows(0, d).into_owned(), multipliers: sol.rows(d, m).into_owned() })
}

/// Symmetric positive definite tridiagonal matrix, factored as `L D Lᵀ`.
#[derive(Debug, Clone)]
pub struct TridiagonalSpd {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagonalSpd {
    /// `diag` has length `d`, `off` length `d - 1`.
    pub fn factor(diag: &[f64], off: &[f64]) -> Result<Self> {
        let dim = diag.len();
        if dim == 0 || off.len() + 1 != dim {
            return Err(Error::InvalidArgument("tridiagonal shape mismatch".into()));
        }
        let mut d = vec![0.0; dim];
        let mut l = vec![0.0; dim.saturating_sub(1)];
        d[0] = diag[0];
        for i in 1..dim {
            if !(d[i - 1] > 0.0) {
                return Err(Error::SingularKkt);
            }
            l[i - 1] = off[i - 1] / d[i - 1];
            d[i] = diag[i] - l[i - 1] * off[i - 1];
        }
        if !(d[dim - 1] > 0.0) {
            return Err(Error::SingularKkt);
        }
        Ok(Self { d, l })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let dim = self.dim();
        let mut y = rhs.clone();
        for i in 1..dim {
            y[i] -= self.l[i - 1] * y[i - 1];
        }
        for i in 0..dim {
            y[i] /= self.d[i];
        }
        for i in (0..dim - 1).rev() {
            y[i] -= self.l[i] * y[i + 1];
        }
        y
    }
}

/// Range-space KKT solve with a tridiagonal SPD Hessian. `constraints` holds
/// the rows of `A`; an empty slice gives the unconstrained minimizer.
pub fn solve_tridiagonal_kkt(
    q: &TridiagonalSpd,
    c: &DVector<f64>,
    constraints: &[DVector<f64>],
    b: &DVector<f64>,
) -> Result<KktSolution> {
    let dim = q.dim();
    let m = constraints.len();
    if c.len() != dim || b.len() != m || constraints.iter().any(|a| a.len() != dim) {
        return Err(Error::InvalidArgument("inconsistent KKT block shapes".into()));
    }
    let free = q.solve(&(-c));
    if m == 0 {
        return Ok(KktSolution { z: free, multipliers: DVector::zeros(0) });
    }
    let ys: Vec<DVector<f64>> = constraints.iter().map(|a| q.solve(a)).collect();
    let schur = DMatrix::from_fn(m, m, |i, j| constraints[i].dot(&ys[j]));
    let rhs = DVector::from_fn(m, |i, _| constraints[i].dot(&free) - b[i]);
    let scale = schur.amax();
    let chol = schur.clone().cholesky().ok_or(Error::SingularKkt)?;
    if (0..m).any(|i| chol.l_dirty()[(i, i)].powi(2) <= 1e-14 * scale) {
        return Err(Error::SingularKkt);
    }
    let multipliers = chol.solve(&rhs);
    let mut z = free;
    for (y, lam) in ys.iter().zip(multipliers.iter()) {
        z.axpy(-lam, y, 1.0);
    }
    Ok(KktSolution { z, multipliers })
}
