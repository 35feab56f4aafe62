//! Receding-horizon mission loop.
//!
//! Each arc explores the control ball from the current pre-impulse state,
//! commits the best impulse, re-propagates the committed segment at tighter
//! tolerance for reporting and coasts to the reduced horizon time, where the
//! next arc starts.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AsteroidModel, InertialState, Tolerances};
use crate::explorers::{
    explore_hsb, explore_monte_carlo, explore_nte, explore_pgd, ExplorationResult, ExploreError, ExplorerConfig,
    ExplorerMethod,
};
use crate::observation::{ConstraintPotentialParams, ObservationRegion};
use crate::scenario::{PlannerSettings, ScenarioFile};
use crate::score::{CandidateEvaluation, ImpulseCandidate, ScoreError, ScoreProblem, ScoringField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("arc {arc}: pre-impulse state is inside r_impact")]
    InsideBody { arc: usize },
    #[error("arc {arc}: {source}")]
    Explorer { arc: usize, source: ExploreError },
    #[error("arc {arc}: committed segment failed: {source}")]
    Commit { arc: usize, source: ScoreError },
}

/// Everything an arc needs besides the start state and explorer.
#[derive(Debug, Clone, Copy)]
pub struct ArcContext<'a> {
    pub model: &'a AsteroidModel,
    /// Regions scored by the objective on this arc.
    pub regions: &'a [ObservationRegion],
    /// Regions reported per sample (the full mission set).
    pub report_regions: &'a [ObservationRegion],
    pub params: &'a ConstraintPotentialParams,
    pub tol: Tolerances,
    pub report_tol: Tolerances,
    pub horizon: f64,
    pub min_coast_fraction: f64,
}

/// One row of the committed trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSample {
    pub t: f64,
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub z: f64,
    pub z_dot: f64,
    pub region_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcPlan {
    pub arc_index: usize,
    pub x0_minus: InertialState,
    pub impulse: ImpulseCandidate,
    pub evaluation: CandidateEvaluation,
    #[serde(skip)]
    pub explorer_result: Option<ExplorationResult<CandidateEvaluation>>,
    pub evals_used: usize,
    /// End of the committed coast, `impulse.t_h`.
    pub coast_end: f64,
    pub end_state: InertialState,
    pub segment: Vec<SegmentSample>,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl ArcPlan {
    /// Peak of each reported region's potential over the committed segment.
    pub fn region_peaks(&self) -> Vec<f64> {
        let n = self.segment.first().map_or(0, |s| s.region_scores.len());
        (0..n)
            .map(|i| self.segment.iter().map(|s| s.region_scores[i]).fold(0.0, f64::max))
            .collect()
    }
}

pub fn run_explorer<F>(
    method: ExplorerMethod,
    eval_fn: &F,
    config: &ExplorerConfig,
) -> Result<ExplorationResult<CandidateEvaluation>, ExploreError>
where
    F: Fn(&Vector3<f64>) -> Result<CandidateEvaluation, ScoreError> + Sync,
{
    match method {
        ExplorerMethod::Hsb => explore_hsb(eval_fn, config),
        ExplorerMethod::Pgd => explore_pgd(eval_fn, config),
        ExplorerMethod::Nte => explore_nte(eval_fn, config),
        ExplorerMethod::MonteCarlo => explore_monte_carlo(eval_fn, config),
    }
}

/// Plans one arc: explore, commit, re-propagate the committed segment.
pub fn plan_arc(
    ctx: &ArcContext<'_>,
    method: ExplorerMethod,
    config: &ExplorerConfig,
    x0_minus: &InertialState,
    arc_index: usize,
) -> Result<ArcPlan, PlanError> {
    if x0_minus.r.norm() <= ctx.model.r_impact {
        return Err(PlanError::InsideBody { arc: arc_index });
    }
    let problem = ScoreProblem::new(ctx.model, ctx.regions, ctx.params, *x0_minus, ctx.horizon, ctx.tol)
        .with_min_coast_fraction(ctx.min_coast_fraction);
    let eval_fn = |u: &Vector3<f64>| problem.evaluate(u);
    let result = run_explorer(method, &eval_fn, config).map_err(|source| PlanError::Explorer { arc: arc_index, source })?;
    let evaluation = result.best_eval.clone();
    let impulse = evaluation.candidate();
    let coast_end = impulse.t_h;

    let report = ScoreProblem { tol: ctx.report_tol, ..problem };
    let arc = report.integrate(&impulse.u, coast_end).map_err(|source| PlanError::Commit { arc: arc_index, source })?;
    let report_field = ScoringField::new(ctx.model, ctx.report_regions, ctx.params);
    let segment: Vec<SegmentSample> = arc
        .sample_times(coast_end)
        .into_iter()
        .map(|t| {
            let x = arc.state_at(t);
            SegmentSample {
                t,
                r: x.r,
                v: x.v,
                z: arc.z_at(t),
                z_dot: arc.integrand_at(t),
                region_scores: report_field.region_scores(t, &x.r),
            }
        })
        .collect();
    let (min_radius, max_radius) = segment
        .iter()
        .map(|s| s.r.norm())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
    let end_state = arc.state_at(coast_end);
    Ok(ArcPlan {
        arc_index,
        x0_minus: *x0_minus,
        impulse,
        evaluation,
        evals_used: result.evals_used,
        explorer_result: Some(result),
        coast_end,
        end_state,
        segment,
        min_radius,
        max_radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVisit {
    pub name: String,
    pub visited: bool,
    pub first_visit_epoch: Option<f64>,
    pub peak_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetySummary {
    pub min_radius: f64,
    pub max_radius: f64,
    pub impact_violation: bool,
    pub escape_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub method: ExplorerMethod,
    pub seed: u64,
    pub arcs: Vec<ArcPlan>,
    pub visited: Vec<RegionVisit>,
    /// Fraction of regions visited, in `[0, 1]`.
    pub goal_achievement: f64,
    pub total_evals: usize,
    pub safety: SafetySummary,
    /// Set when an arc failed and the mission was truncated.
    pub failure: Option<String>,
}

impl MissionReport {
    pub fn trajectory(&self) -> impl Iterator<Item = (usize, &SegmentSample)> {
        self.arcs.iter().flat_map(|a| a.segment.iter().map(move |s| (a.arc_index, s)))
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|v| v.visited).count()
    }
}

/// Seed of arc `arc` derived from the mission seed.
pub fn arc_seed(seed: u64, arc: usize) -> u64 {
    seed ^ (arc as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Visit bookkeeping across arcs.
#[derive(Debug, Clone)]
pub struct VisitTracker {
    threshold: f64,
    weights: Vec<f64>,
    first_visit: Vec<Option<f64>>,
    peaks: Vec<f64>,
}

impl VisitTracker {
    pub fn new(regions: &[ObservationRegion], threshold: f64) -> Self {
        Self {
            threshold,
            weights: regions.iter().map(|r| r.weight).collect(),
            first_visit: vec![None; regions.len()],
            peaks: vec![0.0; regions.len()],
        }
    }

    pub fn is_visited(&self, i: usize) -> bool {
        self.first_visit[i].is_some()
    }

    pub fn record(&mut self, segment: &[SegmentSample]) {
        for s in segment {
            for (i, &w) in s.region_scores.iter().enumerate() {
                self.peaks[i] = self.peaks[i].max(w);
                if self.first_visit[i].is_none() && self.weights[i] > 0.0 && w >= self.threshold * self.weights[i] {
                    self.first_visit[i] = Some(s.t);
                }
            }
        }
    }

    pub fn goal_achievement(&self) -> f64 {
        if self.weights.is_empty() {
            return 0.0;
        }
        self.first_visit.iter().filter(|v| v.is_some()).count() as f64 / self.weights.len() as f64
    }

    pub fn visits(&self, regions: &[ObservationRegion]) -> Vec<RegionVisit> {
        regions
            .iter()
            .enumerate()
            .map(|(i, r)| RegionVisit {
                name: r.name.clone(),
                visited: self.first_visit[i].is_some(),
                first_visit_epoch: self.first_visit[i],
                peak_score: self.peaks[i],
            })
            .collect()
    }
}

/// Runs `n_arcs` arcs with the scenario's configured explorer.
pub fn run_mission(scenario: &ScenarioFile, n_arcs: usize) -> MissionReport {
    run_mission_with(scenario, scenario.explorer.method, n_arcs)
}

pub fn run_mission_with(scenario: &ScenarioFile, method: ExplorerMethod, n_arcs: usize) -> MissionReport {
    let model = scenario.model();
    let regions = scenario.regions();
    let params = scenario.params();
    let settings: PlannerSettings = scenario.planner_settings();
    let base_config = scenario.explorer_config(method);

    let mut tracker = VisitTracker::new(&regions, settings.visit_threshold);
    let mut arcs = Vec::with_capacity(n_arcs);
    let mut failure = None;
    let mut state = scenario.initial_state();

    for j in 0..n_arcs {
        let active: Vec<ObservationRegion> = regions
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r = r.clone();
                if settings.retire_visited && tracker.is_visited(i) {
                    r.weight = 0.0;
                }
                r
            })
            .collect();
        let ctx = ArcContext {
            model: &model,
            regions: &active,
            report_regions: &regions,
            params: &params,
            tol: scenario.tolerances(),
            report_tol: scenario.report_tolerances(),
            horizon: settings.horizon,
            min_coast_fraction: settings.min_coast_fraction,
        };
        let config = ExplorerConfig { seed: arc_seed(scenario.seed, j), ..base_config };
        match plan_arc(&ctx, method, &config, &state, j) {
            Ok(plan) => {
                log::info!(
                    "arc {j}: J = {:.6}, t_h - t0 = {:.1} s, |u| = {:.3e} km/s, {} evals",
                    plan.evaluation.objective,
                    plan.impulse.t_h - plan.x0_minus.t,
                    plan.impulse.u.norm(),
                    plan.evals_used
                );
                tracker.record(&plan.segment);
                state = plan.end_state;
                arcs.push(plan);
            }
            Err(e) => {
                log::warn!("mission truncated: {e}");
                failure = Some(e.to_string());
                break;
            }
        }
    }

    let min_radius = arcs.iter().map(|a| a.min_radius).fold(f64::INFINITY, f64::min);
    let max_radius = arcs.iter().map(|a| a.max_radius).fold(0.0, f64::max);
    MissionReport {
        method,
        seed: scenario.seed,
        visited: tracker.visits(&regions),
        goal_achievement: tracker.goal_achievement(),
        total_evals: arcs.iter().map(|a| a.evals_used).sum(),
        safety: SafetySummary {
            min_radius,
            max_radius,
            impact_violation: min_radius < model.r_impact,
            escape_violation: max_radius > model.r_escape,
        },
        arcs,
        failure,
    }
}
