use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use ultraharnack::harnack::{two_point_check, two_point_exponent};
use ultraharnack::path::{action_closed_form, integrate_harnack_along_path, minimize_action_numeric, optimal_path};
use ultraharnack::qp::solve_dense_kkt;
use ultraharnack::quadrature::GaussLegendre;
use ultraharnack::sampling::{self, MixtureSampler};
use ultraharnack::{Component, MixtureSolution, Pole, Problem};

fn endpoints(seed: u64, index: u64, pr: &Problem) -> (DVector<f64>, f64, DVector<f64>, f64) {
    let mut rng = sampling::stream(seed, index);
    let p = sampling::uniform_vec(&mut rng, pr.dim(), -2.0, 2.0);
    let q = sampling::uniform_vec(&mut rng, pr.dim(), -2.0, 2.0);
    let t1 = rng.random_range(0.1..2.0);
    let t2 = t1 + rng.random_range(0.2..3.0);
    (p, t1, q, t2)
}

#[test]
fn numeric_minimum_matches_closed_form() {
    let mut rng = sampling::stream(41, 0);
    for i in 0..30 {
        let pr = sampling::random_problem(&mut rng, 4);
        let (p, t1, q, t2) = endpoints(41, i + 1, &pr);
        let closed = action_closed_form(&pr, &p, t1, &q, t2).unwrap();
        let num = minimize_action_numeric(&pr, &p, t1, &q, t2, 1024).unwrap();
        assert!(num.action >= closed * (1.0 - 1e-12));
        assert!((num.action - closed).abs() <= 1e-6 * closed.max(1e-12));
        let last = num.nodes.last().unwrap();
        assert!((last - &q).amax() < 1e-10, "terminal state");
    }
}

#[test]
fn worked_example_from_both_routes() {
    let pr = Problem::new(1, 1).unwrap();
    let (p, q) = (DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![1.0, 0.0]));
    assert_eq!(action_closed_form(&pr, &p, 1.0, &q, 2.0).unwrap(), 4.0);
    let num = minimize_action_numeric(&pr, &p, 1.0, &q, 2.0, 1024).unwrap();
    assert!((num.action - 4.0).abs() < 4e-6);
}

#[test]
fn discretization_error_is_second_order() {
    let pr = Problem::new(2, 2).unwrap();
    let (p, t1, q, t2) = endpoints(42, 0, &pr);
    let closed = action_closed_form(&pr, &p, t1, &q, t2).unwrap();
    let err = |s| minimize_action_numeric(&pr, &p, t1, &q, t2, s).unwrap().action - closed;
    let (e1, e2, e3) = (err(64), err(128), err(256));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }
}

#[test]
fn tridiagonal_route_matches_dense_kkt() {
    // Assemble the discrete QP of one constrained component in full and
    // solve it with the dense solver.
    let pr = Problem::new(1, 1).unwrap();
    let (p, t1, q, t2) = endpoints(43, 0, &pr);
    let steps = 40;
    let h = (t2 - t1) / steps as f64;
    let m = steps - 1;
    let qm = DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => 4.0 / h,
        1 => -2.0 / h,
        _ => 0.0,
    });
    let mut c = DVector::zeros(m);
    c[0] = -2.0 * p[0] / h;
    c[m - 1] = -2.0 * q[0] / h;
    let a = DMatrix::from_element(1, m, h);
    let b = DVector::from_element(1, -(q[1] - p[1]) - 0.5 * h * (p[0] + q[0]));
    let dense = solve_dense_kkt(&qm, &c, &a, &b).unwrap();
    let num = minimize_action_numeric(&pr, &p, t1, &q, t2, steps).unwrap();
    for j in 0..m {
        assert!((num.nodes[j + 1][0] - dense.z[j]).abs() < 1e-11);
    }
}

#[test]
fn constraints_and_terminal_values_hold() {
    let gl = GaussLegendre::new(20);
    for i in 0..50 {
        let mut rng = sampling::stream(44, i);
        let pr = sampling::random_problem(&mut rng, 4);
        let (p, t1, q, t2) = endpoints(44, 1000 + i, &pr);
        let plan = optimal_path(&pr, &p, t1, &q, t2).unwrap();
        let n = pr.n();
        for c in 0..pr.k() {
            // 50 panels x 20 nodes = 1000 evaluation points.
            let integral = gl.integrate_composite(t1, t2, 50, |t| plan.hat(c, t));
            let want = -(q[n + c] - p[n + c]) - 0.5 * (q[c] + p[c]) * (t2 - t1);
            assert!((integral - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
        for c in 0..n {
            assert!(plan.hat(c, t1).abs() < 1e-15 && plan.hat(c, t2).abs() < 1e-12);
        }
        assert!((plan.position(t2) - &q).amax() < 1e-10);
        let quad = plan.action_by_quadrature();
        assert!((quad - plan.action).abs() <= 1e-10 * plan.action.max(1e-12));
        let exponent = two_point_exponent(&pr, &p, t1, &q, t2);
        assert!((-plan.action / 4.0 + exponent).abs() <= 1e-12 * (1.0 + exponent));
    }
}

#[test]
fn free_components_are_straight() {
    let pr = Problem::new(4, 2).unwrap();
    let (p, t1, q, t2) = endpoints(45, 0, &pr);
    let plan = optimal_path(&pr, &p, t1, &q, t2).unwrap();
    let samples = plan.sample(33);
    for c in 2..4 {
        for w in samples.windows(3) {
            let second = w[0].1[c] - 2.0 * w[1].1[c] + w[2].1[c];
            assert!(second.abs() < 1e-12);
        }
    }
}

#[test]
fn perturbations_do_not_lower_the_action() {
    // δ(s) = Σ a_j sin(2jπ s) vanishes at both ends and integrates to zero,
    // so it keeps boundary values and the integral constraints.
    let pr = Problem::new(2, 1).unwrap();
    let (p, t1, q, t2) = endpoints(46, 0, &pr);
    let plan = optimal_path(&pr, &p, t1, &q, t2).unwrap();
    let gl = GaussLegendre::new(32);
    let dt = t2 - t1;
    let mut rng = sampling::stream(46, 1);
    for _ in 0..200 {
        let coeffs: Vec<Vec<f64>> =
            (0..pr.n()).map(|_| (1..=4).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let action = gl.integrate_composite(t1, t2, 16, |t| {
            let s = (t - t1) / dt;
            let v = plan.velocity(t);
            (0..pr.n())
                .map(|i| {
                    let dd: f64 = coeffs[i]
                        .iter()
                        .enumerate()
                        .map(|(j, a)| {
                            let w = 2.0 * (j + 1) as f64 * std::f64::consts::PI;
                            a * w / dt * (w * s).cos()
                        })
                        .sum();
                    (v[i] + dd).powi(2)
                })
                .sum()
        });
        assert!(action >= plan.action - 1e-12 * (1.0 + plan.action));
    }
}

#[test]
fn harnack_integration_along_paths() {
    let pr = Problem::new(1, 1).unwrap();
    let f = MixtureSolution::new(pr, vec![Component::new(1.0, Pole::origin(&pr))], 0.0).unwrap();
    let z = DVector::zeros(2);
    let eq = integrate_harnack_along_path(&f, &optimal_path(&pr, &z, 1.0, &z, 3.0).unwrap()).unwrap();
    assert!((eq.lhs - eq.rhs).abs() < 1e-12);

    let sampler = MixtureSampler::default();
    for i in 0..100 {
        let mut rng = sampling::stream(47, i);
        let pr = sampling::random_problem(&mut rng, 3);
        let sol = sampler.mixture(&mut rng, &pr);
        let (p, t1, q, t2) = endpoints(47, 1000 + i, &pr);
        let plan = optimal_path(&pr, &p, t1, &q, t2).unwrap();
        let ph = integrate_harnack_along_path(&sol, &plan).unwrap();
        assert!(ph.lhs >= ph.rhs - 1e-8);
        assert!(ph.min_pointwise_slack >= -1e-5);
        let tp = two_point_check(&sol, &p, t1, &q, t2).unwrap();
        // Compared as logs: the ratio itself overflows for short, far paths.
        let log_ratio = tp.log_actual - tp.log_bound;
        assert!((ph.lhs - ph.rhs - log_ratio).abs() <= 1e-10 * (1.0 + log_ratio.abs()));
    }
}

proptest! {
    #[test]
    fn time_translation_changes_nothing(seed in 0u64..1000, shift in -0.09..5.0f64) {
        let mut rng = sampling::stream(seed, 48);
        let pr = sampling::random_problem(&mut rng, 4);
        let (p, t1, q, t2) = endpoints(seed, 49, &pr);
        let a = action_closed_form(&pr, &p, t1, &q, t2).unwrap();
        let b = action_closed_form(&pr, &p, t1 + shift, &q, t2 + shift).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * a.max(1.0) * 1e2);
    }

    #[test]
    fn discrete_action_never_undercuts_closed_form(seed in 0u64..1000, steps in 16usize..200) {
        let mut rng = sampling::stream(seed, 50);
        let pr = sampling::random_problem(&mut rng, 3);
        let (p, t1, q, t2) = endpoints(seed, 51, &pr);
        let closed = action_closed_form(&pr, &p, t1, &q, t2).unwrap();
        let num = minimize_action_numeric(&pr, &p, t1, &q, t2, steps).unwrap();
        prop_assert!(num.action >= closed * (1.0 - 1e-12) - 1e-14);
    }
}
