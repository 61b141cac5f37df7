mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use ultraharnack::kernel::{hessian_log_f, log_kernel_jet, log_kernel_time_derivative, pde_residual_relative};
use ultraharnack::quadrature::GaussLegendre;
use ultraharnack::{Pole, Problem};

#[test]
fn reference_hessian_matches_entry_list() {
    for (n, k) in [(1, 1), (2, 1), (2, 2), (3, 2), (4, 1)] {
        let pr = Problem::new(n, k).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let got = hessian_log_f(&pr, t).unwrap();
            let want = reference_hessian(&pr, t);
            assert!((&got - &want).amax() <= 1e-14 * want.amax(), "(n,k)=({n},{k}) t={t}");
        }
    }
}

#[test]
fn log_value_matches_displayed_formula() {
    let pr = Problem::new(3, 2).unwrap();
    let x = DVector::from_vec(vec![0.3, -1.2, 0.8, 2.0, -0.5]);
    let xi = DVector::from_vec(vec![-0.4, 0.1, 1.0, 0.2, 0.9]);
    for (t, tau) in [(1.0, 0.0), (0.3, -0.2), (4.0, 1.5)] {
        let jet = log_kernel_jet(&pr, &point(&x, t), &pole(&xi, tau)).unwrap();
        let direct = log_kernel_direct(&pr, &x, t, &xi, tau);
        assert!((jet.log_value - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }
}

#[test]
fn jets_match_finite_differences() {
    for pr in all_problems(3) {
        let dim = pr.dim();
        let x = DVector::from_fn(dim, |i, _| 0.4 - 0.3 * i as f64);
        let xi = DVector::from_fn(dim, |i, _| 0.1 * i as f64);
        let (t, tau) = (1.3, 0.2);
        let jet = log_kernel_jet(&pr, &point(&x, t), &pole(&xi, tau)).unwrap();
        let f = |y: &DVector<f64>| log_kernel_direct(&pr, y, t, &xi, tau);
        let g = fd_gradient(f, &x, 1e-5);
        let h = fd_hessian(f, &x, 1e-4);
        assert!((&jet.grad - &g).amax() <= 1e-6 * (1.0 + g.amax()));
        assert!((&jet.hess - &h).amax() <= 1e-6 * (1.0 + h.amax()));
        let lt =
            (log_kernel_direct(&pr, &x, t + 1e-5, &xi, tau) - log_kernel_direct(&pr, &x, t - 1e-5, &xi, tau)) / 2e-5;
        let got = log_kernel_time_derivative(&pr, &point(&x, t), &pole(&xi, tau)).unwrap();
        assert!((got - lt).abs() <= 1e-6 * (1.0 + lt.abs()));
    }
}

#[test]
fn equation_holds_by_finite_differences_of_the_value() {
    // Residual of the plain (not log) equation from differences of Γ itself.
    let pr = Problem::new(2, 1).unwrap();
    let xi = DVector::from_vec(vec![0.2, -0.1, 0.3]);
    let x = DVector::from_vec(vec![0.5, -0.7, 0.1]);
    let (t, tau) = (1.1, 0.0);
    let g = |y: &DVector<f64>, s: f64| kernel_direct(&pr, y, s, &xi, tau);
    let h = 1e-4;
    let gt = (g(&x, t + h) - g(&x, t - h)) / (2.0 * h);
    let hess = fd_hessian(|y| g(y, t), &x, h);
    let grad = fd_gradient(|y| g(y, t), &x, h);
    let residual = gt - hess[(0, 0)] - hess[(1, 1)] - x[0] * grad[2];
    assert!(residual.abs() <= 1e-6 * g(&x, t));
}

#[test]
fn unit_mass_by_quadrature() {
    let gl = GaussLegendre::new(48);
    for (pr, t) in [(Problem::new(1, 1).unwrap(), 1.0), (Problem::new(1, 1).unwrap(), 0.4)] {
        let xi = DVector::from_vec(vec![0.3, -0.2]);
        // Γ is a Gaussian in x with spread ~√t in x_1 and ~t^{3/2} in x_2.
        let mass = gl.integrate_composite(-15.0, 15.0, 30, |a| {
            gl.integrate_composite(-15.0, 15.0, 30, |b| kernel_direct(&pr, &DVector::from_vec(vec![a, b]), t, &xi, 0.0))
        });
        assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    }
    let pr = Problem::new(2, 1).unwrap();
    let gl = GaussLegendre::new(24);
    let mass = gl.integrate_composite(-12.0, 12.0, 12, |a| {
        gl.integrate_composite(-12.0, 12.0, 12, |b| {
            gl.integrate_composite(-12.0, 12.0, 12, |c| {
                kernel_direct(&pr, &DVector::from_vec(vec![a, b, c]), 1.0, &DVector::zeros(3), 0.0)
            })
        })
    });
    assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
}

#[test]
fn kernel_vanishes_before_its_pole() {
    let pr = Problem::new(1, 1).unwrap();
    let z = DVector::zeros(2);
    assert!(log_kernel_jet(&pr, &point(&z, 0.5), &pole(&z, 0.5)).is_err());
    assert!(log_kernel_jet(&pr, &point(&z, 0.5), &pole(&z, 0.7)).is_err());
    assert_eq!(kernel_direct(&pr, &z, 0.5, &z, 0.7), 0.0);
}

fn arb_case() -> impl Strategy<Value = (Problem, Vec<f64>, Vec<f64>, f64, f64)> {
    (1usize..=4).prop_flat_map(|n| (Just(n), 1usize..=n)).prop_flat_map(|(n, k)| {
        let dim = n + k;
        (
            Just(Problem::new(n, k).unwrap()),
            prop::collection::vec(-2.0..2.0f64, dim),
            prop::collection::vec(-1.0..1.0f64, dim),
            0.05..5.0f64,
            -2.0..2.0f64,
        )
    })
}

proptest! {
    #[test]
    fn relative_residual_is_rounding_level((pr, x, xi, s, tau) in arb_case()) {
        let x = DVector::from_vec(x);
        let xi = DVector::from_vec(xi);
        let r = pde_residual_relative(&pr, &point(&x, tau + s), &pole(&xi, tau)).unwrap();
        let jet = log_kernel_jet(&pr, &point(&x, tau + s), &pole(&xi, tau)).unwrap();
        let scale = 1.0 + jet.grad.norm_squared() + jet.hess.amax() * pr.dim() as f64;
        prop_assert!(r.abs() <= 1e-10 * scale);
    }

    #[test]
    fn time_translation_invariance((pr, x, xi, s, tau) in arb_case(), shift in -3.0..3.0f64) {
        let x = DVector::from_vec(x);
        let xi = DVector::from_vec(xi);
        let a = log_kernel_jet(&pr, &point(&x, tau + s), &pole(&xi, tau)).unwrap();
        let b = log_kernel_jet(&pr, &point(&x, tau + shift + s), &Pole { xi: xi.clone(), tau: tau + shift }).unwrap();
        prop_assert!((a.log_value - b.log_value).abs() <= 1e-9 * (1.0 + a.log_value.abs()));
        prop_assert!((a.hess - b.hess).amax() <= 1e-9 * (1.0 + 6.0 / s.powi(3)));
    }

    #[test]
    fn hessian_is_position_free((pr, x, xi, s, _tau) in arb_case()) {
        let x = DVector::from_vec(x);
        let xi = DVector::from_vec(xi);
        let jet = log_kernel_jet(&pr, &point(&x, s), &pole(&xi, 0.0)).unwrap();
        let f = hessian_log_f(&pr, s).unwrap();
        prop_assert!((jet.hess - &f).amax() <= 1e-12 * f.amax());
    }
}
