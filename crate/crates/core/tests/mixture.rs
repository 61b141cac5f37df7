mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use ultraharnack::mixture::{caloric_polynomial, caloric_polynomial_time_derivative, MixtureFile};
use ultraharnack::sampling::{self, MixtureSampler};
use ultraharnack::{Component, MixtureSolution, Pole, Problem};

/// `log u` summed directly from kernel values, without the log-domain path.
fn log_u_direct(sol: &MixtureSolution, x: &DVector<f64>, t: f64) -> f64 {
    let pr = sol.problem();
    let mut u: f64 =
        sol.components().iter().map(|c| c.log_weight.exp() * kernel_direct(pr, x, t, &c.pole.xi, c.pole.tau)).sum();
    if sol.epsilon() > 0.0 {
        u += sol.epsilon() * caloric_direct(pr, x, t);
    }
    u.ln()
}

#[test]
fn caloric_polynomial_matches_plain_sum_and_solves_the_equation() {
    let mut rng = sampling::stream(11, 0);
    for pr in all_problems(4) {
        let (n, k) = (pr.n(), pr.k());
        for _ in 0..50 {
            let x = sampling::uniform_vec(&mut rng, pr.dim(), -3.0, 3.0);
            let t = rng.random_range(0.01..5.0);
            let v = caloric_polynomial(&pr, &point(&x, t)).unwrap();
            let direct = caloric_direct(&pr, &x, t);
            assert!((v.value - direct).abs() <= 1e-12 * direct);
            // Derivatives read off the expansion by hand.
            let vt = caloric_polynomial_time_derivative(&pr, &point(&x, t)).unwrap();
            let mut vt_hand = 2.0 * n as f64 + 2.0 * k as f64 * t * t;
            for i in 0..k {
                vt_hand += 2.0 * t * x[i] * x[i] + 2.0 * x[i] * x[n + i];
            }
            assert!((vt - vt_hand).abs() <= 1e-12 * (1.0 + vt_hand.abs()));
            let mut residual = vt;
            for i in 0..n {
                residual -= v.hess[(i, i)];
            }
            for i in 0..k {
                residual -= x[i] * v.grad[n + i];
            }
            assert!(residual.abs() <= 1e-12 * (1.0 + vt.abs()));
            let h = fd_hessian(|y| caloric_direct(&pr, y, t), &x, 1e-3);
            assert!((&v.hess - h).amax() <= 1e-6 * (1.0 + t * t));
        }
    }
}

#[test]
fn log_jets_match_direct_differences() {
    let mut rng = sampling::stream(12, 0);
    let sampler = MixtureSampler { max_poles: 6, ..Default::default() };
    for _ in 0..40 {
        let pr = sampling::random_problem(&mut rng, 3);
        let sol = sampler.mixture(&mut rng, &pr);
        let x = sampling::uniform_vec(&mut rng, pr.dim(), -1.5, 1.5);
        let t = sol.t_domain().0.max(0.0) + rng.random_range(0.5..2.0);
        let jet = sol.solution_jet(&point(&x, t)).unwrap();
        let f = |y: &DVector<f64>| log_u_direct(&sol, y, t);
        assert!((jet.log_u - f(&x)).abs() <= 1e-10 * (1.0 + jet.log_u.abs()));
        let g = fd_gradient(f, &x, 1e-5);
        let h = fd_hessian(f, &x, 1e-4);
        assert!((&jet.grad_log - &g).amax() <= 1e-5 * (1.0 + g.amax()), "grad");
        assert!((&jet.hess_log - &h).amax() <= 1e-4 * (1.0 + h.amax()), "hess {}", (&jet.hess_log - &h).amax());
    }
}

#[test]
fn extreme_weights_stay_finite() {
    let pr = Problem::new(2, 1).unwrap();
    let sol = MixtureSolution::new(
        pr,
        vec![
            Component { log_weight: 600.0, pole: Pole::new(vec![1.0, 0.0, 0.0], -0.5) },
            Component { log_weight: -600.0, pole: Pole::new(vec![-1.0, 0.5, 0.0], 0.0) },
        ],
        0.0,
    )
    .unwrap();
    let jet = sol.solution_jet(&point(&DVector::from_vec(vec![0.2, 0.1, -0.3]), 1.0)).unwrap();
    assert!(jet.log_u.is_finite() && jet.hess_log.iter().all(|v| v.is_finite()));
    assert!(jet.log_u > 590.0);
}

#[test]
fn json_round_trip_preserves_hash() {
    let mut rng = sampling::stream(13, 0);
    let pr = Problem::new(3, 2).unwrap();
    let sol = MixtureSampler::default().mixture(&mut rng, &pr);
    let back = MixtureSolution::from_json(&sol.to_json()).unwrap();
    assert_eq!(back.content_hash(), sol.content_hash());
    let file: MixtureFile = serde_json::from_str(&sol.to_json()).unwrap();
    assert_eq!(file.poles.len(), sol.components().len());
}

proptest! {
    #[test]
    fn scaling_leaves_log_hessian_unchanged(seed in 0u64..500, factor in 1e-3..1e3f64) {
        let mut rng = sampling::stream(seed, 0);
        let pr = sampling::random_problem(&mut rng, 4);
        let sol = MixtureSampler::default().mixture(&mut rng, &pr);
        let scaled = sol.rescaled(factor).unwrap();
        let x = sampling::uniform_vec(&mut rng, pr.dim(), -2.0, 2.0);
        let p = point(&x, sol.t_domain().0.max(0.0) + 1.0);
        let a = sol.solution_jet(&p).unwrap();
        let b = scaled.solution_jet(&p).unwrap();
        prop_assert!((a.hess_log - &b.hess_log).amax() <= 1e-9 * (1.0 + b.hess_log.amax()));
        prop_assert!((b.log_u - a.log_u - factor.ln()).abs() <= 1e-9 * (1.0 + a.log_u.abs()));
    }

    #[test]
    fn mixtures_solve_the_equation(seed in 0u64..500) {
        let mut rng = sampling::stream(seed, 1);
        let pr = sampling::random_problem(&mut rng, 3);
        let sol = MixtureSampler { max_poles: 5, ..Default::default() }.mixture(&mut rng, &pr);
        let x = sampling::uniform_vec(&mut rng, pr.dim(), -2.0, 2.0);
        let p = point(&x, sol.t_domain().0.max(0.0) + rng.random_range(0.3..3.0));
        let jet = sol.solution_jet(&p).unwrap();
        let scale = 1.0 + jet.grad_log.norm_squared() + jet.hess_log.amax() * pr.dim() as f64
            + x.amax() * jet.grad_log.amax() * pr.k() as f64;
        prop_assert!(sol.pde_residual(&p).unwrap().abs() <= 1e-6 * scale);
    }
}
