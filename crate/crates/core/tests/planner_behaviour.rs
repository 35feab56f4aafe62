use reachgrad_core::{
    plan_arc, propagate, run_mission, run_mission_with, ArcContext, ExplorerMethod, ObservationRegion, ScenarioFile,
    ScoreProblem, Vector3,
};

fn short_scenario(n_arcs: usize) -> ScenarioFile {
    let mut sc = ScenarioFile::bundled_eros();
    sc.planner.n_arcs = n_arcs;
    sc.seed = 3;
    sc
}

fn arc_context<'a>(
    sc: &ScenarioFile,
    model: &'a reachgrad_core::AsteroidModel,
    regions: &'a [reachgrad_core::ObservationRegion],
    params: &'a reachgrad_core::ConstraintPotentialParams,
) -> ArcContext<'a> {
    let settings = sc.planner_settings();
    ArcContext {
        model,
        regions,
        report_regions: regions,
        params,
        tol: sc.tolerances(),
        report_tol: sc.report_tolerances(),
        horizon: settings.horizon,
        min_coast_fraction: settings.min_coast_fraction,
    }
}

#[test]
fn zero_control_bound_coasts() {
    let mut sc = short_scenario(1);
    sc.constraints.u_max = 0.0;
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let ctx = arc_context(&sc, &m, &regions, &params);
    let x0 = sc.initial_state();
    let plan = plan_arc(&ctx, ExplorerMethod::Nte, &sc.explorer_config(ExplorerMethod::Nte), &x0, 0).unwrap();
    assert_eq!(plan.impulse.u, Vector3::zeros());
    assert!(plan.impulse.t_h >= x0.t && plan.impulse.t_h <= x0.t + ctx.horizon);
    let coast = propagate(&m, &x0, plan.coast_end, &sc.report_tolerances()).unwrap().final_state();
    assert!((coast.r - plan.end_state.r).norm() <= 1e-9);
}

#[test]
fn committed_objective_matches_reevaluation() {
    let sc = short_scenario(1);
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let ctx = arc_context(&sc, &m, &regions, &params);
    let x0 = sc.initial_state();
    let plan = plan_arc(&ctx, ExplorerMethod::Hsb, &sc.explorer_config(ExplorerMethod::Hsb), &x0, 0).unwrap();
    let problem =
        ScoreProblem::new(&m, &regions, &params, x0, ctx.horizon, ctx.tol).with_min_coast_fraction(ctx.min_coast_fraction);
    let again = problem.evaluate(&plan.impulse.u).unwrap();
    assert_eq!(again, plan.evaluation);
    assert!(plan.impulse.t_h >= x0.t + ctx.min_coast_fraction * ctx.horizon - 1e-9);
}

#[test]
fn committed_objective_is_within_five_percent_of_monte_carlo() {
    let sc = ScenarioFile::bundled_eros();
    let (m, regions, params) = (sc.model(), sc.regions(), sc.params());
    let ctx = arc_context(&sc, &m, &regions, &params);
    let x0 = sc.initial_state();
    let nte = plan_arc(&ctx, ExplorerMethod::Nte, &sc.explorer_config(ExplorerMethod::Nte), &x0, 0).unwrap();
    let mc = plan_arc(&ctx, ExplorerMethod::MonteCarlo, &sc.explorer_config(ExplorerMethod::MonteCarlo), &x0, 0).unwrap();
    assert_eq!(mc.evals_used, 3516);
    let (j, j_mc) = (nte.evaluation.objective, mc.evaluation.objective);
    assert!(j >= j_mc - 0.05 * j_mc.abs(), "NTE {j} vs MC {j_mc}");
}

#[test]
fn arcs_chain_with_continuous_position_and_impulsive_velocity() {
    let report = run_mission(&short_scenario(3), 3);
    assert!(report.failure.is_none(), "{:?}", report.failure);
    assert_eq!(report.arcs.len(), 3);
    for pair in report.arcs.windows(2) {
        assert_eq!(pair[1].x0_minus, pair[0].end_state);
        assert_eq!(pair[1].x0_minus.t, pair[0].coast_end);
    }
    for arc in &report.arcs {
        let first = &arc.segment[0];
        assert_eq!(first.t, arc.x0_minus.t);
        assert_eq!(first.r, arc.x0_minus.r);
        assert!((first.v - arc.x0_minus.v - arc.impulse.u).norm() <= 1e-15);
        assert_eq!(arc.impulse.u, arc.explorer_result.as_ref().unwrap().best_u);
        assert!(arc.impulse.t_h >= arc.x0_minus.t && arc.impulse.t_h <= arc.x0_minus.t + 18972.0);
        let lo = arc.segment.iter().map(|s| s.r.norm()).fold(f64::INFINITY, f64::min);
        assert_eq!(lo, arc.min_radius);
    }
    assert_eq!(report.total_evals, report.arcs.iter().map(|a| a.evals_used).sum::<usize>());
    let budget = short_scenario(3).budget_for(ExplorerMethod::Nte);
    assert!(report.arcs.iter().all(|a| a.evals_used <= budget));
}

#[test]
fn visits_accumulate_monotonically_across_arcs() {
    let sc = short_scenario(3);
    let reports: Vec<_> = (1..=3).map(|n| run_mission_with(&sc, ExplorerMethod::Hsb, n)).collect();
    for pair in reports.windows(2) {
        assert_eq!(pair[0].arcs[..], pair[1].arcs[..pair[0].arcs.len()]);
        for (a, b) in pair[0].visited.iter().zip(&pair[1].visited) {
            assert!(!a.visited || b.visited, "{} was unset", a.name);
            if a.visited {
                assert_eq!(a.first_visit_epoch, b.first_visit_epoch);
            }
            assert!(b.peak_score >= a.peak_score);
        }
        assert!(pair[1].goal_achievement >= pair[0].goal_achievement);
    }
    for r in &reports {
        assert_eq!(r.goal_achievement, r.visited_count() as f64 / r.visited.len() as f64);
    }
}

#[test]
fn goal_achievement_ignores_region_order() {
    let sc = short_scenario(2);
    let mut reversed = sc.clone();
    reversed.regions.reverse();
    let a = run_mission_with(&sc, ExplorerMethod::Hsb, 2);
    let b = run_mission_with(&reversed, ExplorerMethod::Hsb, 2);
    assert_eq!(a.goal_achievement, b.goal_achievement);
    let mut names_a: Vec<_> = a.visited.iter().filter(|v| v.visited).map(|v| v.name.clone()).collect();
    let mut names_b: Vec<_> = b.visited.iter().filter(|v| v.visited).map(|v| v.name.clone()).collect();
    names_a.sort();
    names_b.sort();
    assert_eq!(names_a, names_b);
}

#[test]
fn empty_goal_set_still_flies() {
    let mut sc = short_scenario(2);
    sc.regions.clear();
    let report = run_mission(&sc, 2);
    assert!(report.failure.is_none());
    assert_eq!(report.arcs.len(), 2);
    assert_eq!(report.goal_achievement, 0.0);
    assert!(report.visited.is_empty());
    assert!(!report.safety.impact_violation);
}

#[test]
fn mission_is_reproducible() {
    let sc = short_scenario(2);
    assert_eq!(run_mission(&sc, 2), run_mission(&sc, 2));
}

#[test]
fn start_inside_the_body_truncates_the_report() {
    let mut sc = short_scenario(2);
    sc.spacecraft.position = [15.0, 0.0, 0.0];
    let report = run_mission(&sc, 2);
    assert!(report.arcs.is_empty());
    assert!(report.failure.as_deref().unwrap().contains("arc 0"));
    assert_eq!(report.total_evals, 0);
}

#[test]
fn safety_flags_follow_the_recorded_radii() {
    let mut sc = short_scenario(1);
    sc.constraints.u_max = 0.0;
    let nominal = run_mission(&sc, 1);
    assert!(!nominal.safety.impact_violation && !nominal.safety.escape_violation);
    sc.asteroid.r_escape = 0.5 * (nominal.safety.min_radius + nominal.safety.max_radius);
    let tight = run_mission(&sc, 1);
    assert_eq!(tight.safety.max_radius, nominal.safety.max_radius);
    assert!(tight.safety.escape_violation && !tight.safety.impact_violation);
}

#[test]
fn retired_regions_drop_out_of_later_objectives() {
    let mut sc = short_scenario(2);
    sc.planner.retire_visited = true;
    let report = run_mission_with(&sc, ExplorerMethod::Hsb, 2);
    let (m, params) = (sc.model(), sc.params());
    let settings = sc.planner_settings();
    let first_peaks = report.arcs[0].region_peaks();
    let active: Vec<ObservationRegion> = sc
        .regions()
        .into_iter()
        .zip(&first_peaks)
        .map(|(r, &p)| if p >= settings.visit_threshold * r.weight { ObservationRegion { weight: 0.0, ..r } } else { r })
        .collect();
    assert!(active.iter().any(|r| r.weight == 0.0), "nothing visited on the first arc");
    let second = &report.arcs[1];
    let problem = ScoreProblem::new(&m, &active, &params, second.x0_minus, settings.horizon, sc.tolerances())
        .with_min_coast_fraction(settings.min_coast_fraction);
    assert_eq!(problem.evaluate(&second.impulse.u).unwrap(), second.evaluation);

    let mut keep = sc.clone();
    keep.planner.retire_visited = false;
    assert_eq!(run_mission_with(&keep, ExplorerMethod::Hsb, 1).arcs[0], report.arcs[0]);
}
