//! Goal-oriented impulsive guidance about small bodies.
//!
//! Candidate impulses are scored by integrating the spacecraft state together
//! with a running observation score, its impulse sensitivity and the state
//! transition matrix. The resulting objective and gradient drive the
//! reachable-map explorers used by the receding-horizon planner.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod explorers;
pub mod observation;
pub mod ode;
pub mod planner;
pub mod scenario;
pub mod score;

pub use dynamics::{
    acceleration, jacobian, propagate, propagate_with_stm, AsteroidModel, DynamicsError, InertialState,
    StateTransitionMatrix, StmTrajectory, Tolerances, Trajectory,
};
pub use explorers::{
    explore_hsb, explore_monte_carlo, explore_nte, explore_pgd, sample_control_ball, ExplorationResult, ExploreError,
    ExplorerConfig, ExplorerMethod, HistoryEntry, HsbKnobs, NteKnobs, PgdKnobs, Scored,
};
pub use observation::{
    constraint_potential, map_jacobian, map_to_abstract, region_potential, AbstractObservation,
    ConstraintPotentialParams, MapJacobian, ObservationError, ObservationRegion, SurfaceFeature, Window,
};
pub use planner::{plan_arc, run_mission, run_mission_with, ArcContext, ArcPlan, MissionReport, PlanError, RegionVisit};
pub use scenario::{ScenarioError, ScenarioFile};
pub use score::{
    apply_impulse, evaluate_candidate, reduce_horizon, CandidateEvaluation, ImpulseCandidate, ScoreError, ScoreProblem,
    ScoringField, TraceSample,
};

pub use nalgebra::{Matrix6, Vector3};
