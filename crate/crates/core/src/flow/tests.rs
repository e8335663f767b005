use super::*;
use crate::random::{rng, uniform_function};

fn k2_kernel(s: f64) -> FractionalKernel {
    FractionalKernel::from_graph(&Graph::complete(2), s).unwrap()
}

/// Classical fixed-step RK4 on the direct system; independent of the
/// adaptive integrator.
fn rk4_reference(kernel: &FractionalKernel, u0: &[f64], cfg: &FlowConfig, dt: f64) -> Vec<f64> {
    let f = |u: &[f64]| rhs_direct(kernel, u, cfg.p, cfg.q, cfg.eps_reg).unwrap().into_vec();
    let steps = (cfg.horizon / dt).round() as usize;
    let h = cfg.horizon / steps as f64;
    let mut u = u0.to_vec();
    let add = |u: &[f64], k: &[f64], c: f64| -> Vec<f64> { u.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for _ in 0..steps {
        let k1 = f(&u);
        let k2 = f(&add(&u, &k1, h / 2.0));
        let k3 = f(&add(&u, &k2, h / 2.0));
        let k4 = f(&add(&u, &k3, h));
        for i in 0..u.len() {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u
}

#[test]
fn rhs_of_constant_is_zero() {
    let k = FractionalKernel::from_graph(&Graph::path(3), 0.4).unwrap();
    for (p, q) in [(2.0, 1.0), (1.5, 0.5), (3.0, 2.0)] {
        let r = rhs_direct(&k, &[1.3; 3], p, q, 1e-12).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn rhs_q1_is_negated_p_laplacian() {
    let k = FractionalKernel::from_graph(&Graph::path(4), 0.7).unwrap();
    let u = [0.6, 1.4, 0.9, 1.9];
    let r = rhs_direct(&k, &u, 2.6, 1.0, 1e-12).unwrap();
    let l = k.frac_p_laplacian(&u, 2.6, 1e-12).unwrap();
    for (a, b) in r.iter().zip(l.iter()) {
        assert_eq!(*a, -b);
    }
}

#[test]
fn rhs_k2_hand_evaluation() {
    // W = 2^{-1/2}; (−Δ)^s u = W (1 − 0.5) at x and W (0.5 − 1) at y
    let r = rhs_direct(&k2_kernel(0.5), &[1.0, 0.5], 2.0, 1.0, 0.0).unwrap();
    let e = 2f64.powf(-1.5);
    assert!((r[0] + e).abs() < 1e-15 && (r[1] - e).abs() < 1e-15);
    assert!((r[0] + 0.3535533906).abs() < 1e-10);
}

#[test]
fn rhs_rejects_nonpositive_state() {
    assert!(matches!(
        rhs_direct(&k2_kernel(0.5), &[1.0, 0.0], 2.0, 2.0, 0.0),
        Err(Error::NonPositiveState { vertex: 1, .. })
    ));
}

#[test]
fn step_on_constant_advances_time_only() {
    let k = k2_kernel(0.5);
    let cfg = FlowConfig::new(0.5, 2.0, 2.0, 1.0);
    let st = FlowState {
        t: 0.25,
        u: vec![0.8, 0.8].into(),
    };
    let out = step(&k, &st, 0.1, &cfg, None).unwrap();
    assert_eq!(out.state.u, st.u);
    assert!((out.state.t - 0.35).abs() < 1e-15);
    assert_eq!(out.error, 0.0);
}

#[test]
fn accepted_step_respects_error_bound() {
    let k = k2_kernel(0.5);
    let cfg = FlowConfig::new(0.5, 2.0, 2.0, 1.0);
    let st = FlowState {
        t: 0.0,
        u: vec![2.0, 0.5].into(),
    };
    // deliberately too large a trial step
    let out = step(&k, &st, 0.9, &cfg, None).unwrap();
    assert!(out.dt < 0.9);
    assert!(out.error <= cfg.atol + cfg.rtol * st.u.sup_norm());
    assert!(out.stats.rejected >= 1);
}

#[test]
fn tighter_tolerance_reduces_global_error() {
    let k = k2_kernel(0.5);
    let u0 = [2.0, 0.5];
    let base = FlowConfig::new(0.5, 2.0, 2.0, 1.0).with_dt_out(0.5);
    let reference = rk4_reference(&k, &u0, &base, 1e-4);
    let err = |tol: f64| {
        let cfg = base.with_tolerances(tol, tol);
        let tr = evolve_direct(&k, &u0, &cfg).unwrap();
        tr.last().u.sup_distance(&reference)
    };
    // asymptotic regime: global error ∝ tolerance
    for tol in [1e-6, 1e-7, 1e-8] {
        let (e1, e2) = (err(tol), err(0.5 * tol));
        assert!(e2 <= 0.5 * e1, "tol {tol:e}: {e1:e} -> {e2:e}");
    }
}

#[test]
fn constant_data_is_stationary() {
    let k = FractionalKernel::from_graph(&Graph::path(3), 0.5).unwrap();
    let cfg = FlowConfig::new(0.5, 1.5, 0.5, 3.0);
    let tr = evolve_direct(&k, &[1.7; 3], &cfg).unwrap();
    assert_eq!(tr.len(), DEFAULT_OUTPUT_INTERVALS + 1);
    assert!(tr.states.iter().all(|st| st.u.as_slice() == [1.7; 3]));
}

#[test]
fn k2_matches_fine_step_reference() {
    for s in [0.2, 0.5, 0.8] {
        let k = k2_kernel(s);
        let u0 = [1.8, 0.6];
        let cfg = FlowConfig::new(s, 2.0, 2.0, 1.0);
        let tr = evolve_direct(&k, &u0, &cfg).unwrap();
        let reference = rk4_reference(&k, &u0, &cfg, 1e-6);
        let tol = 10.0 * (cfg.atol + cfg.rtol * 1.8);
        let d = tr.last().u.sup_distance(&reference);
        assert!(d <= tol, "s={s}: {d:e}");
    }
}

#[test]
fn frozen_with_constant_coefficient_is_rescaled_linear_flow() {
    let g = Graph::path(4);
    let k = FractionalKernel::from_graph(&g, 0.5).unwrap();
    let (q, c) = (1.5, 1.3);
    let alpha = q * f64::powf(c, q - 1.0);
    let u0 = [0.7, 1.9, 1.1, 1.4];
    let cfg = FlowConfig::new(0.5, 2.5, q, 2.0).with_dt_out(0.1);
    let grid = cfg.output_grid();
    let a = FrozenCoefficient::stationary(&grid, &[c; 4], q).unwrap();
    let frozen = solve_frozen(&k, &a, &u0, &cfg).unwrap();

    let rescaled = FlowConfig::new(0.5, 2.5, 1.0, 2.0 / alpha).with_dt_out(0.1 / alpha);
    let direct = evolve_direct(&k, &u0, &rescaled).unwrap();
    assert_eq!(direct.len(), frozen.len());
    assert!(frozen.sup_distance(&direct) < 1e-8);
}

#[test]
fn frozen_q1_equals_direct_bitwise() {
    let mut r = rng(11);
    let g = crate::random::random_connected_graph(&mut r, &crate::random::RandomGraphSpec::new(6));
    let k = FractionalKernel::from_graph(&g, 0.3).unwrap();
    let u0 = uniform_function(&mut r, 6, 0.5, 2.0);
    let cfg = FlowConfig::new(0.3, 3.0, 1.0, 1.0);
    let a = FrozenCoefficient::stationary(&cfg.output_grid(), &u0, 1.0).unwrap();
    let frozen = solve_frozen(&k, &a, &u0, &cfg).unwrap();
    let direct = evolve_direct(&k, &u0, &cfg).unwrap();
    assert_eq!(frozen.sup_distance(&direct), 0.0);
}

#[test]
fn frozen_coefficient_interpolates_linearly() {
    let a = FrozenCoefficient::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![3.0], vec![2.0]]).unwrap();
    assert_eq!(a.eval(0.5), vec![2.0]);
    assert_eq!(a.eval(1.0), vec![3.0]);
    assert_eq!(a.eval(1.75), vec![2.25]);
    assert_eq!(a.eval(5.0), vec![2.0]);
    assert!(FrozenCoefficient::new(vec![0.0], vec![vec![0.0]]).is_err());
}

#[test]
fn frozen_coefficient_stays_within_bound() {
    let k = FractionalKernel::from_graph(&Graph::complete(4), 0.5).unwrap();
    let u0 = [0.5, 2.0, 1.0, 1.5];
    for q in [0.5, 1.5, 3.0] {
        let cfg = FlowConfig::new(0.5, 2.0, q, 1.0);
        let tr = evolve_direct(&k, &u0, &cfg).unwrap();
        let a = FrozenCoefficient::from_trajectory(&tr, q).unwrap();
        let c = coefficient_bound(&u0, q);
        assert!(a.min_value() > 0.0);
        assert!(a.max_value() <= c * (1.0 + 1e-8), "q={q}: {} > {c}", a.max_value());
    }
}

#[test]
fn picard_is_exact_at_q1() {
    let k = FractionalKernel::from_graph(&Graph::path(4), 0.6).unwrap();
    let u0 = [0.9, 1.6, 0.7, 1.2];
    let cfg = FlowConfig::new(0.6, 2.5, 1.0, 1.0);
    let out = picard_solve(&k, &u0, &cfg).unwrap();
    assert_eq!(out.iterations, 1);
    let direct = evolve_direct(&k, &u0, &cfg).unwrap();
    assert!(out.trajectory.sup_distance(&direct) <= 1e-13);
}

#[test]
fn picard_constant_data_converges_immediately() {
    let k = FractionalKernel::from_graph(&Graph::path(3), 0.5).unwrap();
    let cfg = FlowConfig::new(0.5, 3.0, 2.0, 1.0);
    let out = picard_solve(&k, &[1.2; 3], &cfg).unwrap();
    assert_eq!(out.iterations, 1);
    assert_eq!(out.history, vec![0.0]);
}

#[test]
fn picard_reports_non_convergence() {
    let k = FractionalKernel::from_graph(&Graph::complete(3), 0.5).unwrap();
    let mut cfg = FlowConfig::new(0.5, 2.0, 2.0, 1.0);
    cfg.picard_max = 2;
    match picard_solve(&k, &[0.5, 1.0, 2.0], &cfg) {
        Err(Error::PicardNotConverged { iterations, history, .. }) => {
            assert_eq!(iterations, 2);
            assert_eq!(history.len(), 2);
        }
        other => panic!("expected PicardNotConverged, got {other:?}"),
    }
}

#[test]
fn steady_state_examples() {
    let g = Graph::complete(2);
    assert_eq!(steady_state(&g, &[1.4, 1.4], 0.7).unwrap(), 1.4);
    assert_eq!(steady_state(&g, &[1.0, 3.0], 1.0).unwrap(), 2.0);
    let c = steady_state(&g, &[1.0, 3.0], 2.0).unwrap();
    assert!((c - 5f64.sqrt()).abs() < 1e-15);
    assert!((c - 2.2360679775).abs() < 1e-10);
}

#[test]
fn config_validation() {
    let ok = FlowConfig::new(0.5, 2.0, 1.0, 1.0);
    assert!(ok.validate().is_ok());
    let mut bad = ok;
    bad.s = 1.0;
    assert!(matches!(bad.validate(), Err(Error::ExponentOutOfRange { name: "s", .. })));
    bad = ok;
    bad.q = 0.0;
    assert!(matches!(bad.validate(), Err(Error::ExponentOutOfRange { name: "q", .. })));
    bad = ok;
    bad.horizon = -1.0;
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));

    let json = r#"{"s":0.5,"p":2.5,"q":1.5,"T":2.0}"#;
    let cfg: FlowConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg, FlowConfig::new(0.5, 2.5, 1.5, 2.0));
}

#[test]
fn output_grid_is_uniform_and_ends_at_horizon() {
    let cfg = FlowConfig::new(0.5, 2.0, 1.0, 1.0).with_dt_out(0.3);
    let g = cfg.output_grid();
    assert_eq!(g.len(), 5);
    assert_eq!(g[4], 1.0);
    let cfg = FlowConfig::new(0.5, 2.0, 1.0, 1.0).with_dt_out(1e-3);
    assert_eq!(cfg.output_grid().len(), 1001);
}

#[test]
fn kernel_config_mismatch_is_rejected() {
    let k = k2_kernel(0.5);
    let cfg = FlowConfig::new(0.4, 2.0, 1.0, 1.0);
    assert!(matches!(evolve_direct(&k, &[1.0, 2.0], &cfg), Err(Error::InvalidConfig(_))));
}
