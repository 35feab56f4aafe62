//! Reachable-map explorers over the control ball `|u| <= u_max`.
//!
//! All strategies share [`Session`], which owns the evaluation budget, the
//! history in evaluation-index order and the running best. Batches are
//! evaluated with rayon but recorded in index order, so results do not depend
//! on the worker count.

mod hsb;
mod monte_carlo;
mod nte;
mod pgd;
pub mod synthetic;

pub use hsb::explore_hsb;
pub use monte_carlo::explore_monte_carlo;
pub use nte::explore_nte;
pub use pgd::explore_pgd;

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::CandidateEvaluation;

/// Slack allowed on `|u| <= u_max` after projection.
pub const FEASIBILITY_SLACK: f64 = 1e-15;
/// Line-search steps shorter than this (km/s) end a descent.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExploreError {
    #[error("invalid explorer configuration: {0}")]
    InvalidConfig(String),
    #[error("no successful evaluation in {evals_used} attempts")]
    NoFeasibleEvaluation { evals_used: usize },
}

/// Anything an explorer can rank and ascend.
pub trait Scored {
    fn objective(&self) -> f64;
    fn gradient(&self) -> Vector3<f64>;

    /// Reduced horizon time behind the objective, when there is one.
    fn horizon_time(&self) -> Option<f64> {
        None
    }
}

impl Scored for CandidateEvaluation {
    fn objective(&self) -> f64 {
        self.objective
    }

    fn gradient(&self) -> Vector3<f64> {
        self.grad_u
    }

    fn horizon_time(&self) -> Option<f64> {
        Some(self.t_h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplorerMethod {
    Hsb,
    Pgd,
    Nte,
    #[serde(rename = "mc")]
    MonteCarlo,
}

impl ExplorerMethod {
    pub const ALL: [ExplorerMethod; 4] = [Self::Hsb, Self::Pgd, Self::Nte, Self::MonteCarlo];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Hsb => "hsb",
            Self::Pgd => "pgd",
            Self::Nte => "nte",
            Self::MonteCarlo => "mc",
        }
    }
}

impl fmt::Display for ExplorerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExplorerMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hsb" => Ok(Self::Hsb),
            "pgd" => Ok(Self::Pgd),
            "nte" => Ok(Self::Nte),
            "mc" | "gt" | "monte_carlo" => Ok(Self::MonteCarlo),
            other => Err(format!("unknown explorer method `{other}` (expected hsb, pgd, nte or mc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsbKnobs {
    pub n_samples_init: usize,
    pub n_refine_rounds: usize,
    pub top_k: usize,
    pub shrink_factor: f64,
}

impl Default for HsbKnobs {
    fn default() -> Self {
        Self { n_samples_init: 60, n_refine_rounds: 4, top_k: 5, shrink_factor: 0.5 }
    }
}

/// `initial_step` is a fraction of `u_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdKnobs {
    pub n_samples_init: usize,
    pub n_descents: usize,
    pub max_steps: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
}

impl Default for PgdKnobs {
    fn default() -> Self {
        Self { n_samples_init: 40, n_descents: 4, max_steps: 15, armijo_c: 1e-4, backtrack_factor: 0.5, initial_step: 0.2 }
    }
}

/// `trust_radius_init` is a fraction of `u_max`. The short gradient arcs reuse
/// the PGD line-search constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NteKnobs {
    pub branch_width: usize,
    pub grad_steps_per_node: usize,
    pub beam_width: usize,
    pub max_depth: usize,
    pub trust_radius_init: f64,
    pub trust_radius_shrink: f64,
}

impl Default for NteKnobs {
    fn default() -> Self {
        Self {
            branch_width: 6,
            grad_steps_per_node: 3,
            beam_width: 3,
            max_depth: 4,
            trust_radius_init: 0.4,
            trust_radius_shrink: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    /// km/s
    pub u_max: f64,
    pub budget: usize,
    pub seed: u64,
    pub hsb: HsbKnobs,
    pub pgd: PgdKnobs,
    pub nte: NteKnobs,
}

impl ExplorerConfig {
    pub fn new(u_max: f64, budget: usize, seed: u64) -> Self {
        Self { u_max, budget, seed, hsb: HsbKnobs::default(), pgd: PgdKnobs::default(), nte: NteKnobs::default() }
    }

    pub fn validate(&self) -> Result<(), ExploreError> {
        let bad = |m: &str| Err(ExploreError::InvalidConfig(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be positive");
        }
        if !(self.u_max >= 0.0) || !self.u_max.is_finite() {
            return bad("u_max must be a non-negative number");
        }
        let unit = |x: f64| x > 0.0 && x < 1.0;
        let h = &self.hsb;
        if h.n_samples_init == 0 || h.top_k == 0 || !unit(h.shrink_factor) {
            return bad("hsb: counts must be >= 1 and shrink_factor in (0,1)");
        }
        let p = &self.pgd;
        if p.n_samples_init == 0 || p.n_descents == 0 || p.max_steps == 0 || !unit(p.backtrack_factor) {
            return bad("pgd: counts must be >= 1 and backtrack_factor in (0,1)");
        }
        if !unit(p.armijo_c) || !(p.initial_step > 0.0) {
            return bad("pgd: armijo_c in (0,1) and initial_step > 0 required");
        }
        let n = &self.nte;
        if n.branch_width == 0 || n.beam_width == 0 || !unit(n.trust_radius_shrink) || !(n.trust_radius_init > 0.0) {
            return bad("nte: widths must be >= 1, trust_radius_shrink in (0,1), trust_radius_init > 0");
        }
        Ok(())
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub index: usize,
    pub u: Vector3<f64>,
    /// `None` when the evaluation failed.
    pub objective: Option<f64>,
    pub t_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationResult<T> {
    pub best_u: Vector3<f64>,
    pub best_eval: T,
    pub best_index: usize,
    pub evals_used: usize,
    pub history: Vec<HistoryEntry>,
    /// Best objective after each evaluation; `-inf` until the first success.
    #[serde(skip)]
    pub best_so_far_curve: Vec<f64>,
    /// History indices where local searches ended (PGD descents, the final NTE beam).
    pub local_optima: Vec<usize>,
}

impl<T: Scored> ExplorationResult<T> {
    pub fn best_objective(&self) -> f64 {
        self.best_eval.objective()
    }
}

/// Lightweight record of a successful evaluation used for ranking and ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Probe {
    pub index: usize,
    pub u: Vector3<f64>,
    pub objective: f64,
    pub grad: Vector3<f64>,
}

pub(crate) struct Session<'f, F, T> {
    eval_fn: &'f F,
    budget: usize,
    history: Vec<HistoryEntry>,
    curve: Vec<f64>,
    probes: Vec<Probe>,
    best: Option<(usize, Vector3<f64>, T)>,
    local_optima: Vec<usize>,
}

impl<'f, F, T, E> Session<'f, F, T>
where
    F: Fn(&Vector3<f64>) -> Result<T, E> + Sync,
    T: Scored + Send,
    E: Send + fmt::Display,
{
    pub fn new(eval_fn: &'f F, budget: usize) -> Self {
        Self {
            eval_fn,
            budget,
            history: Vec::new(),
            curve: Vec::new(),
            probes: Vec::new(),
            best: None,
            local_optima: Vec::new(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.history.len()
    }

    pub fn exhausted(&self) -> bool {
        self.remaining() == 0
    }

    /// Every successful probe so far, in evaluation order.
    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    fn record(&mut self, u: Vector3<f64>, outcome: Result<T, E>) -> Option<Probe> {
        let index = self.history.len();
        let prev_best = self.curve.last().copied().unwrap_or(f64::NEG_INFINITY);
        match outcome {
            Ok(eval) => {
                let objective = eval.objective();
                let probe = Probe { index, u, objective, grad: eval.gradient() };
                self.history.push(HistoryEntry { index, u, objective: Some(objective), t_h: eval.horizon_time() });
                if objective > prev_best || self.best.is_none() {
                    self.best = Some((index, u, eval));
                }
                self.curve.push(prev_best.max(objective));
                self.probes.push(probe);
                Some(probe)
            }
            Err(e) => {
                log::debug!("evaluation {index} failed for u = {u:?}: {e}");
                self.history.push(HistoryEntry { index, u, objective: None, t_h: None });
                self.curve.push(prev_best);
                None
            }
        }
    }

    /// Evaluates up to `remaining()` candidates concurrently; results keep input order.
    pub fn eval_batch(&mut self, mut us: Vec<Vector3<f64>>) -> Vec<Option<Probe>> {
        us.truncate(self.remaining());
        let f = self.eval_fn;
        let outcomes: Vec<Result<T, E>> = us.par_iter().map(f).collect();
        us.into_iter().zip(outcomes).map(|(u, out)| self.record(u, out)).collect()
    }

    /// `None` when the budget is spent, `Some(None)` when the evaluation failed.
    pub fn eval_one(&mut self, u: Vector3<f64>) -> Option<Option<Probe>> {
        if self.exhausted() {
            return None;
        }
        let out = (self.eval_fn)(&u);
        Some(self.record(u, out))
    }

    pub fn mark_local_optimum(&mut self, probe: &Probe) {
        self.local_optima.push(probe.index);
    }

    /// Global ball samples in batches of `n`, repeated while every one of them
    /// has failed and budget remains. Returns the successful probes.
    pub fn initial_sample<R: Rng>(&mut self, rng: &mut R, u_max: f64, n: usize) -> Vec<Probe> {
        loop {
            let found: Vec<Probe> = self.eval_batch(sample_control_ball(rng, u_max, n)).into_iter().flatten().collect();
            if !found.is_empty() || self.exhausted() {
                return found;
            }
        }
    }

    pub fn finish(self) -> Result<ExplorationResult<T>, ExploreError> {
        let evals_used = self.history.len();
        match self.best {
            Some((best_index, best_u, best_eval)) => Ok(ExplorationResult {
                best_u,
                best_eval,
                best_index,
                evals_used,
                history: self.history,
                best_so_far_curve: self.curve,
                local_optima: self.local_optima,
            }),
            None => Err(ExploreError::NoFeasibleEvaluation { evals_used }),
        }
    }
}

/// `n` samples uniform over the solid ball of radius `u_max`.
pub fn sample_control_ball<R: Rng>(rng: &mut R, u_max: f64, n: usize) -> Vec<Vector3<f64>> {
    (0..n).map(|_| sample_ball(rng, &Vector3::zeros(), u_max)).collect()
}

fn sample_ball<R: Rng>(rng: &mut R, center: &Vector3<f64>, radius: f64) -> Vector3<f64> {
    let dir = loop {
        let d = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n: f64 = d.norm();
        if n > 1e-300 {
            break d / n;
        }
    };
    let s: f64 = rng.random();
    center + radius * s.cbrt() * dir
}

/// Radial projection onto `|u| <= u_max`.
pub fn project_to_ball(u: &Vector3<f64>, u_max: f64) -> Vector3<f64> {
    let n = u.norm();
    if n <= u_max {
        *u
    } else if u_max == 0.0 {
        Vector3::zeros()
    } else {
        u * (u_max / n)
    }
}

/// Uniform sample in a ball around `center`, clipped to the control ball.
pub(crate) fn sample_neighborhood<R: Rng>(rng: &mut R, center: &Vector3<f64>, radius: f64, u_max: f64) -> Vector3<f64> {
    project_to_ball(&sample_ball(rng, center, radius), u_max)
}

/// Best `k` probes, by objective then earliest index.
pub(crate) fn top_k(probes: &[Probe], k: usize) -> Vec<Probe> {
    let mut sorted = probes.to_vec();
    sorted.sort_by(|a, b| b.objective.total_cmp(&a.objective).then(a.index.cmp(&b.index)));
    sorted.truncate(k);
    sorted
}

pub(crate) enum StepOutcome {
    Improved { probe: Probe, step: f64 },
    Stalled,
    Exhausted,
}

/// One projected-ascent step along `grad` with Armijo backtracking; every probe is charged.
pub(crate) fn ascent_step<F, T, E>(
    session: &mut Session<'_, F, T>,
    current: &Probe,
    trial_step: f64,
    knobs: &PgdKnobs,
    u_max: f64,
) -> StepOutcome
where
    F: Fn(&Vector3<f64>) -> Result<T, E> + Sync,
    T: Scored + Send,
    E: Send + fmt::Display,
{
    let g = current.grad;
    let gn = g.norm();
    if !(gn > 0.0) || !gn.is_finite() {
        return StepOutcome::Stalled;
    }
    let dir = g / gn;
    let mut step = trial_step;
    loop {
        if step < MIN_STEP {
            return StepOutcome::Stalled;
        }
        let trial = project_to_ball(&(current.u + step * dir), u_max);
        let delta = trial - current.u;
        if delta.norm() < MIN_STEP {
            return StepOutcome::Stalled;
        }
        match session.eval_one(trial) {
            None => return StepOutcome::Exhausted,
            Some(Some(p)) if p.objective >= current.objective + knobs.armijo_c * g.dot(&delta) => {
                return StepOutcome::Improved { probe: p, step };
            }
            Some(_) => step *= knobs.backtrack_factor,
        }
    }
}

/// Runs up to `max_steps` ascent steps from `start`; returns the final point and whether the budget ran out.
pub(crate) fn ascend<F, T, E>(
    session: &mut Session<'_, F, T>,
    start: Probe,
    max_steps: usize,
    knobs: &PgdKnobs,
    u_max: f64,
) -> (Probe, bool)
where
    F: Fn(&Vector3<f64>) -> Result<T, E> + Sync,
    T: Scored + Send,
    E: Send + fmt::Display,
{
    let initial = knobs.initial_step * u_max;
    let mut current = start;
    let mut trial = initial;
    for _ in 0..max_steps {
        match ascent_step(session, &current, trial, knobs, u_max) {
            StepOutcome::Improved { probe, step } => {
                current = probe;
                trial = (step / knobs.backtrack_factor).min(initial);
            }
            StepOutcome::Stalled => break,
            StepOutcome::Exhausted => return (current, true),
        }
    }
    (current, session.exhausted())
}
