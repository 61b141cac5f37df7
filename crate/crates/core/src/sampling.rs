//! Seeded random streams and random test objects.
//!
//! Every sample draws from its own ChaCha stream selected by `(seed, index)`,
//! so batch results do not depend on evaluation order or thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mixture::{Component, MixtureSolution};
use crate::problem::{Pole, Problem};

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw from `[lo, hi)`; a degenerate range returns `lo`.
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn uniform_vec(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| uniform(rng, lo, hi)))
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    uniform(rng, lo.ln(), hi.ln()).exp()
}

pub fn random_symmetric(rng: &mut impl Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let v = rng.random_range(-scale..scale);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Shape of random mixtures used by the sweeps.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    pub max_poles: usize,
    /// Pole centres are uniform in `[-pole_box, pole_box]^N`.
    pub pole_box: f64,
    /// Pole times are uniform in `[-pole_age, 0]`; a quarter of them sit
    /// exactly at time zero.
    pub pole_age: f64,
    pub log_weight_range: f64,
    /// Probability of adding the caloric polynomial term.
    pub epsilon_probability: f64,
}

impl Default for MixtureSampler {
    fn default() -> Self {
        Self { max_poles: 20, pole_box: 3.0, pole_age: 2.0, log_weight_range: 5.0, epsilon_probability: 0.25 }
    }
}

impl MixtureSampler {
    pub fn components(&self, rng: &mut impl Rng, problem: &Problem) -> Vec<Component> {
        let count = rng.random_range(1..=self.max_poles.max(1));
        (0..count)
            .map(|_| {
                let xi = uniform_vec(rng, problem.dim(), -self.pole_box, self.pole_box);
                let tau = if rng.random_bool(0.25) { 0.0 } else { -uniform(rng, 0.0, self.pole_age) };
                Component {
                    log_weight: uniform(rng, -self.log_weight_range, self.log_weight_range),
                    pole: Pole { xi, tau },
                }
            })
            .collect()
    }

    pub fn mixture(&self, rng: &mut impl Rng, problem: &Problem) -> MixtureSolution {
        let components = self.components(rng, problem);
        let epsilon = if rng.random_bool(self.epsilon_probability) { log_uniform(rng, 1e-6, 1.0) } else { 0.0 };
        MixtureSolution::new(*problem, components, epsilon).expect("sampled mixture is valid")
    }
}

/// Random `(n, k)` with `1 <= k <= n <= max_n`.
pub fn random_problem(rng: &mut impl Rng, max_n: usize) -> Problem {
    let n = rng.random_range(1..=max_n);
    let k = rng.random_range(1..=n);
    Problem::new(n, k).expect("valid by construction")
}
