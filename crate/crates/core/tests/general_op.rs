mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use ultraharnack::general_op::*;
use ultraharnack::kernel::hessian_log_f;
use ultraharnack::quadrature::GaussLegendre;
use ultraharnack::{sampling, Error, Problem};

const PROFILES: [&[usize]; 5] = [&[1, 1], &[2, 1], &[2, 2], &[1, 1, 1], &[2, 2, 1]];

#[test]
fn embedded_kernel_matches_closed_form() {
    let mut rng = sampling::stream(71, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pr = sampling::random_problem(&mut rng, 3);
        let op = OperatorSpec::from_problem(&pr);
        let x = sampling::uniform_vec(&mut rng, pr.dim(), -2.0, 2.0);
        let xi = sampling::uniform_vec(&mut rng, pr.dim(), -1.0, 1.0);
        let tau = -rng.random_range(0.0..1.0);
        let t = rng.random_range(0.2..3.0);
        let jet = kernel_numeric(&op, &x, t, &xi, tau).unwrap();
        let exact = kernel_direct(&pr, &x, t, &xi, tau);
        worst = worst.max((jet.log_value.exp() / exact - 1.0).abs());
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn embedded_log_hessian_is_the_reference() {
    for n in 1..=4 {
        for k in 1..=n {
            let pr = Problem::new(n, k).unwrap();
            let op = OperatorSpec::from_problem(&pr);
            for t in [0.05, 1.0, 7.0] {
                let num = GaussianFlow::new(&op, t).unwrap().log_hessian();
                let exact = hessian_log_f(&pr, t).unwrap();
                assert!((num - &exact).amax() <= 1e-8 * exact.amax());
            }
        }
    }
}

#[test]
fn kernel_has_unit_mass_in_the_target() {
    let gl = GaussLegendre::new(40);
    let mut rng = sampling::stream(72, 0);
    for _ in 0..5 {
        let op = OperatorSpec::random(&mut rng, &[1, 1]).unwrap();
        let x = sampling::uniform_vec(&mut rng, 2, -1.0, 1.0);
        let flow = GaussianFlow::new(&op, 0.8).unwrap();
        let mean = &flow.mean_map * &x;
        let sd: Vec<f64> = (0..2).map(|i| flow.covariance[(i, i)].sqrt()).collect();
        let box_ = |i: usize| (mean[i] - 12.0 * sd[i], mean[i] + 12.0 * sd[i]);
        let (a0, b0) = box_(0);
        let (a1, b1) = box_(1);
        let mass = gl.integrate_composite(a0, b0, 8, |u| {
            gl.integrate_composite(a1, b1, 8, |w| flow.log_jet(&x, &DVector::from_vec(vec![u, w])).log_value.exp())
        });
        assert!((mass - 1.0).abs() <= 1e-6, "{mass}");
    }
}

#[test]
fn kernel_solves_the_backward_equation() {
    // d/dt log Γ = tr(A (H + g gᵀ)) + ⟨x, B g⟩ with g, H the log-jet in x.
    let mut rng = sampling::stream(73, 0);
    for profile in PROFILES {
        let op = OperatorSpec::random(&mut rng, profile).unwrap();
        let dim = op.dim();
        let (a, b) = (op.a_matrix(), op.b_matrix());
        for _ in 0..5 {
            let x = sampling::uniform_vec(&mut rng, dim, -1.0, 1.0);
            let xi = sampling::uniform_vec(&mut rng, dim, -1.0, 1.0);
            let t = rng.random_range(0.5..2.0);
            let h = 1e-4;
            let lv = |s: f64| kernel_numeric(&op, &x, s, &xi, 0.0).unwrap().log_value;
            let dt = (lv(t + h) - lv(t - h)) / (2.0 * h);
            let jet = kernel_numeric(&op, &x, t, &xi, 0.0).unwrap();
            let g = &jet.grad;
            let space = (&a * (&jet.hess + g * g.transpose())).trace() + x.dot(&(&b * g));
            assert!((dt - space).abs() <= 1e-6 * (1.0 + dt.abs()), "{profile:?}: {dt} vs {space}");
        }
    }
}

#[test]
fn numeric_jets_match_finite_differences() {
    let mut rng = sampling::stream(74, 0);
    let op = OperatorSpec::random(&mut rng, &[2, 1, 1]).unwrap();
    let flow = GaussianFlow::new(&op, 1.3).unwrap();
    let x = sampling::uniform_vec(&mut rng, 4, -1.0, 1.0);
    let xi = sampling::uniform_vec(&mut rng, 4, -1.0, 1.0);
    let jet = flow.log_jet(&x, &xi);
    let f = |y: &DVector<f64>| flow.log_jet(y, &xi).log_value;
    assert!((fd_gradient(f, &x, 1e-5) - &jet.grad).amax() <= 1e-6 * (1.0 + jet.grad.amax()));
    assert!((fd_hessian(f, &x, 1e-4) - &jet.hess).amax() <= 1e-5 * (1.0 + jet.hess.amax()));
}

#[test]
fn covariance_is_positive_over_the_lag_range() {
    let mut rng = sampling::stream(75, 0);
    for profile in PROFILES {
        let op = OperatorSpec::random(&mut rng, profile).unwrap();
        // Three blocks scale like s, s³, s⁵, so the conditioning guard can
        // fire below s = 1e-2.
        let lo: f64 = if profile.len() > 2 { 1e-2 } else { 1e-3 };
        for j in 0..=20 {
            let s = lo * (10.0 / lo).powf(j as f64 / 20.0);
            let flow = GaussianFlow::new(&op, s).unwrap();
            let c = &flow.covariance;
            assert!((c - c.transpose()).amax() <= 1e-14 * c.amax());
            assert!(c.clone().symmetric_eigen().eigenvalues.min() > 0.0, "{profile:?} at {s}");
        }
    }
}

#[test]
fn degenerate_inputs_are_rejected() {
    let id = |d| DMatrix::<f64>::identity(d, d);
    assert!(matches!(OperatorSpec::new(vec![1, 2], id(1), vec![DMatrix::zeros(1, 2)]), Err(Error::BadProfile(_))));
    assert!(matches!(OperatorSpec::new(vec![2], id(2), vec![]), Err(Error::BadProfile(_))));
    assert!(matches!(OperatorSpec::new(vec![1, 1], -id(1), vec![id(1)]), Err(Error::NotSpd)));
    let flat = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    assert!(matches!(
        OperatorSpec::new(vec![2, 2], id(2), vec![flat]),
        Err(Error::RankDeficient { index: 0, rank: 1, needed: 2 })
    ));
    let op = OperatorSpec::from_problem(&Problem::new(1, 1).unwrap());
    assert!(matches!(GaussianFlow::new(&op, 1e-8), Err(Error::SingularCovariance(_))));
    let z = DVector::zeros(2);
    assert!(matches!(kernel_numeric(&op, &z, 0.0, &z, 0.0), Err(Error::PoleNotInPast { .. })));
    assert!(matches!(kernel_numeric(&op, &DVector::zeros(3), 1.0, &z, 0.0), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn short_lags_fail_cleanly() {
    let mut rng = sampling::stream(80, 0);
    let op = OperatorSpec::random(&mut rng, &[2, 2, 1]).unwrap();
    for s in [1e-3, 1e-5, 1e-9] {
        match GaussianFlow::new(&op, s) {
            Ok(flow) => assert!(flow.covariance.clone().cholesky().is_some()),
            Err(e) => assert!(matches!(e, Error::SingularCovariance(c) if c > MAX_COVARIANCE_CONDITION)),
        }
    }
}

#[test]
fn bad_scan_configs_are_rejected() {
    let op = OperatorSpec::from_problem(&Problem::new(1, 1).unwrap());
    for cfg in [
        ScanConfig { t_lo: 0.0, ..Default::default() },
        ScanConfig { t_hi: 0.1, ..Default::default() },
        ScanConfig { max_poles: 0, ..Default::default() },
        ScanConfig { x_box: -1.0, ..Default::default() },
        ScanConfig { tol: f64::NAN, ..Default::default() },
    ] {
        assert!(matches!(conjecture_scan(&op, &cfg), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn spec_json_round_trip_and_unknown_fields() {
    let json = r#"{"p":[2,1],"A0":[[1.0,0.2],[0.2,1.0]],"B":[[[1.0],[0.5]]]}"#;
    let op: OperatorSpec = serde_json::from_str(json).unwrap();
    assert_eq!(op.dim(), 3);
    let back: OperatorSpec = serde_json::from_str(&serde_json::to_string(&op).unwrap()).unwrap();
    assert_eq!(back, op);
    assert!(serde_json::from_str::<OperatorSpec>(r#"{"p":[1,1],"A0":[[1]],"B":[[[1]]],"x":1}"#).is_err());
    assert!(serde_json::from_str::<OperatorSpec>(r#"{"p":[1,1],"A0":[[0]],"B":[[[1]]]}"#).is_err());
}

#[test]
fn scan_agrees_with_closed_form_on_embeddings() {
    let cfg = ScanConfig { trials: 200, seed: 5, ..Default::default() };
    for (n, k) in [(1, 1), (2, 1), (2, 2)] {
        let d = embedded_agreement(&Problem::new(n, k).unwrap(), &cfg).unwrap();
        assert!(d <= 1e-6, "({n},{k}): {d}");
    }
}

#[test]
fn scan_is_reproducible() {
    let mut rng = sampling::stream(76, 0);
    let op = OperatorSpec::random(&mut rng, &[2, 1]).unwrap();
    let cfg = ScanConfig { trials: 50, seed: 9, ..Default::default() };
    let a = conjecture_scan(&op, &cfg).unwrap();
    let b = conjecture_scan(&op, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.status, "evidence");
    assert_eq!(a.samples, 50);
}

#[test]
fn three_block_smoke_scan() {
    let mut rng = sampling::stream(77, 0);
    let op = OperatorSpec::random(&mut rng, &[2, 1, 1]).unwrap();
    let report = conjecture_scan(&op, &ScanConfig { trials: 100, seed: 1, ..Default::default() }).unwrap();
    assert!(report.min_eig_overall.is_finite());
    assert_eq!(report.trials.len(), 100);
    for v in &report.violations {
        assert_eq!(v.mixture_hash.len(), 64);
    }
}

#[test]
fn single_kernel_at_origin_has_no_defect() {
    let mut rng = sampling::stream(78, 0);
    for profile in PROFILES {
        let op = OperatorSpec::random(&mut rng, profile).unwrap();
        let cfg = ScanConfig { max_poles: 1, pole_box: 0.0, pole_age: 0.0, ..Default::default() };
        for i in 0..10 {
            let s = scan_sample(&op, &cfg, i).unwrap();
            assert!(s.m.amax() <= 1e-6 * (1.0 + 1.0 / s.t.powi(5)), "{profile:?}: {}", s.m.amax());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_hessian_is_position_free(seed in 0u64..10_000) {
        let mut rng = sampling::stream(seed, 79);
        let op = OperatorSpec::random(&mut rng, &[2, 1]).unwrap();
        let flow = GaussianFlow::new(&op, rng.random_range(0.1..4.0)).unwrap();
        let h0 = flow.log_hessian();
        let x = sampling::uniform_vec(&mut rng, 3, -3.0, 3.0);
        let xi = sampling::uniform_vec(&mut rng, 3, -3.0, 3.0);
        prop_assert!((flow.log_jet(&x, &xi).hess - &h0).amax() <= 1e-12 * h0.amax());
        prop_assert!(h0.symmetric_eigen().eigenvalues.max() < 0.0);
    }
}
