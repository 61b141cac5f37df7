use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension pair `(n, k)`: `n` diffusive directions, `k` of them coupled to
/// transported directions `x_{n+1} .. x_{n+k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawProblem")]
pub struct Problem {
    n: usize,
    k: usize,
}

#[derive(Deserialize)]
struct RawProblem {
    n: usize,
    k: usize,
}

impl TryFrom<RawProblem> for Problem {
    type Error = Error;
    fn try_from(raw: RawProblem) -> Result<Self> {
        Problem::new(raw.n, raw.k)
    }
}

impl Problem {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidProblem { n, k });
        }
        Ok(Self { n, k })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Total space dimension `N = n + k`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n + self.k
    }

    /// Homogeneity exponent `(n + 3k) / 2` of the kernel in time.
    #[inline]
    pub fn time_exponent(&self) -> f64 {
        (self.n + 3 * self.k) as f64 / 2.0
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: len });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: DVector<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: impl Into<Vec<f64>>, t: f64) -> Self {
        Self { x: DVector::from_vec(x.into()), t }
    }
}

/// Pole `(ξ, τ)` of a fundamental solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub xi: DVector<f64>,
    pub tau: f64,
}

impl Pole {
    pub fn new(xi: impl Into<Vec<f64>>, tau: f64) -> Self {
        Self { xi: DVector::from_vec(xi.into()), tau }
    }

    pub fn origin(problem: &Problem) -> Self {
        Self { xi: DVector::zeros(problem.dim()), tau: 0.0 }
    }
}
