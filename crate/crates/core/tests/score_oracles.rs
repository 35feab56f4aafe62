use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reachgrad_core::{
    evaluate_candidate, sample_control_ball, ConstraintPotentialParams, ObservationRegion, ScenarioFile, ScoreProblem,
};

fn fd_gradient(problem: &ScoreProblem<'_>, u: &Vector3<f64>, t: f64, h: f64) -> Vector3<f64> {
    Vector3::from_fn(|k, _| {
        let e = Vector3::ith(k, h);
        let zp = problem.integrate(&(u + e), t).unwrap().z_at(t);
        let zm = problem.integrate(&(u - e), t).unwrap().z_at(t);
        (zp - zm) / (2.0 * h)
    })
}

#[test]
fn eta_matches_finite_differences_at_fixed_horizon_time() {
    let sc = ScenarioFile::bundled_eros();
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let problem = ScoreProblem::new(&m, &regions, &params, sc.initial_state(), sc.planner_settings().horizon, sc.tolerances());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for u in sample_control_ball(&mut rng, sc.constraints.u_max, 10) {
        let eval = problem.evaluate(&u).unwrap();
        let fd = fd_gradient(&problem, &u, eval.t_h, 1e-6);
        let err = (eval.grad_u - fd).norm();
        if fd.norm() < 1e-6 {
            assert!(err <= 1e-8, "absolute error {err:e} at u = {u:?}");
        } else {
            assert!(err / fd.norm() <= 1e-4, "relative error {:e} at u = {u:?}", err / fd.norm());
        }
    }
}

#[test]
fn eta_tracks_finite_differences_along_the_whole_horizon() {
    let sc = ScenarioFile::bundled_eros();
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let horizon = sc.planner_settings().horizon;
    let x0 = sc.initial_state();
    let problem = ScoreProblem::new(&m, &regions, &params, x0, horizon, sc.tolerances());
    let u = Vector3::new(2e-4, -3e-4, 1e-4);
    let arc = problem.integrate(&u, x0.t + horizon).unwrap();
    for frac in [0.25, 0.5, 0.75, 1.0] {
        let t = x0.t + frac * horizon;
        let fd = fd_gradient(&problem, &u, t, 1e-6);
        let eta = arc.eta_at(t);
        let err = (eta - fd).norm();
        assert!(err <= 1e-4 * fd.norm() || err <= 1e-8, "t = {t}: {eta:?} vs {fd:?}");
    }
}

#[test]
fn grad_th_is_the_time_derivative_of_the_running_score() {
    let sc = ScenarioFile::bundled_eros();
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let x0 = sc.initial_state();
    let horizon = sc.planner_settings().horizon;
    let problem = ScoreProblem::new(&m, &regions, &params, x0, horizon, sc.tolerances());
    let u = Vector3::new(-1e-4, 2e-4, 3e-4);
    let arc = problem.integrate(&u, x0.t + horizon).unwrap();
    for frac in [0.2, 0.45, 0.8] {
        let t = x0.t + frac * horizon;
        let h = 1.0;
        let fd = (arc.z_at(t + h) - arc.z_at(t - h)) / (2.0 * h);
        let analytic = arc.integrand_at(t);
        assert!((analytic - fd).abs() <= 1e-6 * analytic.abs().max(1e-8), "{analytic:e} vs {fd:e}");
    }
    let eval = problem.evaluate(&u).unwrap();
    assert!((eval.grad_th - arc.integrand_at(eval.t_h)).abs() <= 1e-12 * eval.grad_th.abs().max(1e-12));
}

#[test]
fn horizon_time_is_a_running_maximum() {
    let sc = ScenarioFile::bundled_eros();
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let x0 = sc.initial_state();
    let horizon = sc.planner_settings().horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    for u in sample_control_ball(&mut rng, sc.constraints.u_max, 10) {
        // Candidates that dive into the body are inadmissible.
        let Ok(eval) = evaluate_candidate(&m, &regions, &params, &x0, &u, horizon, &sc.tolerances()) else {
            continue;
        };
        checked += 1;
        assert!(eval.t_h >= x0.t && eval.t_h <= x0.t + horizon);
        let sampled_max = eval.score_trace.iter().map(|s| s.z).fold(f64::NEG_INFINITY, f64::max);
        assert!(eval.objective >= sampled_max);
        let last = eval.score_trace.last().unwrap();
        assert!((last.t - (x0.t + horizon)).abs() < 1e-9);
    }
    assert!(checked >= 5);
}

#[test]
fn null_field_gives_zero_objective_and_gradient() {
    let sc = ScenarioFile::bundled_eros();
    let m = sc.model();
    let params = ConstraintPotentialParams { barrier_sharpness: 20.0, penalty_scale: 1e-300 };
    let x0 = sc.initial_state();
    let horizon = sc.planner_settings().horizon;
    let eval = evaluate_candidate(&m, &[], &params, &x0, &Vector3::new(1e-4, 0.0, 0.0), horizon, &sc.tolerances()).unwrap();
    assert_eq!(eval.t_h, x0.t);
    assert!(eval.objective.abs() <= 1e-12);
    assert!(eval.grad_u.norm() <= 1e-12);
}

#[test]
fn scaling_region_weights_scales_objective_and_gradient() {
    let sc = ScenarioFile::bundled_eros();
    let m = sc.model();
    let params = ConstraintPotentialParams { barrier_sharpness: 20.0, penalty_scale: 1e-300 };
    let x0 = sc.initial_state();
    let horizon = sc.planner_settings().horizon;
    let regions = sc.regions();
    let lambda = 3.5;
    let scaled: Vec<ObservationRegion> =
        regions.iter().map(|r| ObservationRegion { weight: r.weight * lambda, ..r.clone() }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for u in sample_control_ball(&mut rng, sc.constraints.u_max, 10) {
        let Ok(a) = evaluate_candidate(&m, &regions, &params, &x0, &u, horizon, &sc.tolerances()) else {
            continue;
        };
        let b = evaluate_candidate(&m, &scaled, &params, &x0, &u, horizon, &sc.tolerances()).unwrap();
        checked += 1;
        assert!((b.objective - lambda * a.objective).abs() <= 1e-9 * b.objective.abs().max(1e-12));
        assert!((b.grad_u - lambda * a.grad_u).norm() <= 1e-9 * b.grad_u.norm().max(1e-12));
    }
    assert!(checked >= 5);
}

#[test]
fn evaluation_is_bit_reproducible() {
    let sc = ScenarioFile::bundled_eros();
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let x0 = sc.initial_state();
    let u = Vector3::new(3e-4, 1e-4, -2e-4);
    let horizon = sc.planner_settings().horizon;
    let a = evaluate_candidate(&m, &regions, &params, &x0, &u, horizon, &sc.tolerances()).unwrap();
    let b = evaluate_candidate(&m, &regions, &params, &x0, &u, horizon, &sc.tolerances()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_candidates_are_rejected() {
    let sc = ScenarioFile::bundled_eros();
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let x0 = sc.initial_state();
    let tol = sc.tolerances();
    assert!(evaluate_candidate(&m, &regions, &params, &x0, &Vector3::new(f64::NAN, 0.0, 0.0), 100.0, &tol).is_err());
    assert!(evaluate_candidate(&m, &regions, &params, &x0, &Vector3::zeros(), 0.0, &tol).is_err());
}
