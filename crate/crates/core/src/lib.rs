//! Verification toolkit for the matrix differential Harnack estimate on the
//! ultraparabolic Kolmogorov equation
//!
//! ```text
//!     ∂t u = Σ_{i≤n} ∂²_{x_i} u + Σ_{i≤k} x_i ∂_{x_{n+i}} u     on R^{n+k} × (0, T)
//! ```
//!
//! The crate provides closed-form fundamental solutions ([`kernel`]), positive
//! solutions built from them ([`mixture`]), certification of the Harnack
//! defect `H(log u) - H(log f)` ([`harnack`]), the optimal-path machinery
//! behind the two-point bound ([`path`]), the algebra used in the
//! maximum-principle argument ([`ledger`]), the general block operator class
//! `div(A D) + <x, B D> - ∂t` ([`general_op`]) and an explicit finite
//! difference solver used as an independent check ([`fd_solver`]).

// `!(a > b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fd_solver;
pub mod general_op;
pub mod harnack;
pub mod kernel;
pub mod ledger;
pub mod mixture;
pub mod path;
pub mod problem;
pub mod qp;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use kernel::KernelJet;
pub use mixture::{Component, MixtureSolution, SolutionJet};
pub use problem::{Pole, Problem, SpaceTimePoint};
