//! Candidate evaluation through the augmented variational system.
//!
//! For an impulse `u` applied at `t0` the joint state
//! `[x (6), z (1), eta (3), Phi (36, column-major)]` is integrated over the
//! horizon with
//!
//! ```text
//! z'   = (sum_i w_i(y_i(x, t)) + V_C(x)) / T_h
//! eta' = (sum_i dw_i/dy_i dy_i/dx + dV_C/dx) Phi B / T_h
//! Phi' = df/dx Phi
//! ```
//!
//! so `z(t)` is the running objective and `eta(t) = dz(t)/du` in one forward pass.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{state_derivative, stm_derivative, AsteroidModel, InertialState, StateTransitionMatrix, Tolerances};
use crate::observation::{constraint_radial, region_geometry, region_potential, ConstraintPotentialParams, ObservationRegion};
use crate::ode::{DenseTrajectory, OdeSystem};

/// Uniform trace samples per horizon, on top of the integrator's own steps.
pub const TRACE_SAMPLES: usize = 400;

const AUG_DIM: usize = 46;
const Z: usize = 6;
const ETA: usize = 7;
const PHI: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),
    #[error("evaluation failed at t = {last_time} s ({reason})")]
    EvaluationFailure { last_time: f64, reason: String, partial_trace: Vec<TraceSample> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseCandidate {
    /// km/s
    pub u: Vector3<f64>,
    /// s
    pub t_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub z: f64,
    pub z_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub u: Vector3<f64>,
    pub objective: f64,
    pub grad_u: Vector3<f64>,
    pub grad_th: f64,
    pub t_h: f64,
    pub horizon: f64,
    pub score_trace: Vec<TraceSample>,
    /// Peak `w_i` over the whole horizon, per region.
    pub region_hits: Vec<f64>,
    /// Post-impulse trajectory state at `t_h`.
    pub state_at_th: InertialState,
}

impl CandidateEvaluation {
    pub fn candidate(&self) -> ImpulseCandidate {
        ImpulseCandidate { u: self.u, t_h: self.t_h }
    }
}

/// `x(t0) = x0^- + B u`, `B = [0; I]`.
pub fn apply_impulse(state: &InertialState, u: &Vector3<f64>) -> InertialState {
    InertialState { r: state.r, v: state.v + u, t: state.t }
}

/// Summed region scores plus the constraint barrier, as a function of `(t, r)`.
#[derive(Debug, Clone, Copy)]
pub struct ScoringField<'a> {
    pub model: &'a AsteroidModel,
    pub regions: &'a [ObservationRegion],
    pub params: &'a ConstraintPotentialParams,
}

impl<'a> ScoringField<'a> {
    pub fn new(model: &'a AsteroidModel, regions: &'a [ObservationRegion], params: &'a ConstraintPotentialParams) -> Self {
        Self { model, regions, params }
    }

    /// `sum_i w_i + V_C` and its gradient with respect to position.
    pub fn integrand(&self, t: f64, r: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let rn = r.norm();
        let (mut value, dv) = constraint_radial(self.model, self.params, rn);
        let mut grad = dv / rn * r;
        let rot = self.model.body_to_inertial(t);
        for region in self.regions.iter().filter(|reg| reg.weight > 0.0) {
            let p = rot * region.feature.body_fixed_pos;
            if !in_range_window(region, &p, r) {
                continue;
            }
            let Some(geom) = region_geometry(&p, r, &self.model.sun_dir) else { continue };
            let (w, dw) = region_potential(region, &geom.y);
            if w == 0.0 {
                continue;
            }
            value += w;
            grad += geom.position_jacobian.transpose() * dw;
        }
        (value, grad)
    }

    /// Value of each region's potential (zero-weight regions score 0).
    pub fn region_scores(&self, t: f64, r: &Vector3<f64>) -> Vec<f64> {
        let rot: Matrix3<f64> = self.model.body_to_inertial(t);
        self.regions
            .iter()
            .map(|region| {
                let p = rot * region.feature.body_fixed_pos;
                if !in_range_window(region, &p, r) {
                    return 0.0;
                }
                region_geometry(&p, r, &self.model.sun_dir).map_or(0.0, |g| region_potential(region, &g.y).0)
            })
            .collect()
    }

    /// Integrand value together with the per-region scores, sharing one pass.
    pub fn value_and_scores(&self, t: f64, r: &Vector3<f64>) -> (f64, Vec<f64>) {
        let scores = self.region_scores(t, r);
        let barrier = constraint_radial(self.model, self.params, r.norm()).0;
        (barrier + scores.iter().sum::<f64>(), scores)
    }
}

/// Outside the range window the bump, and so the whole product, is exactly zero.
fn in_range_window(region: &ObservationRegion, p: &Vector3<f64>, r: &Vector3<f64>) -> bool {
    ((r - p).norm() - region.range.center).abs() < region.range.half_width
}

struct AugmentedFlow<'a> {
    field: ScoringField<'a>,
    inv_horizon: f64,
}

impl OdeSystem<AUG_DIM> for AugmentedFlow<'_> {
    fn derivatives(&self, t: f64, y: &[f64; AUG_DIM], dy: &mut [f64; AUG_DIM]) {
        let grad = state_derivative(self.field.model, t, &y[..6], &mut dy[..6]);
        let r = Vector3::new(y[0], y[1], y[2]);
        let (value, g) = self.field.integrand(t, &r);
        dy[Z] = value * self.inv_horizon;
        // eta' picks the velocity columns of Phi; dV/dx has no velocity part.
        for k in 0..3 {
            let c = &y[PHI + (3 + k) * 6..];
            dy[ETA + k] = (g.x * c[0] + g.y * c[1] + g.z * c[2]) * self.inv_horizon;
        }
        stm_derivative(&grad, &y[PHI..], &mut dy[PHI..]);
    }
}

/// One arc's evaluation context: everything except the impulse.
#[derive(Debug, Clone, Copy)]
pub struct ScoreProblem<'a> {
    pub field: ScoringField<'a>,
    pub x0_minus: InertialState,
    pub horizon: f64,
    pub tol: Tolerances,
    /// Earliest admissible `t_h - t0`, s. Zero searches the whole horizon.
    pub min_coast: f64,
}

impl<'a> ScoreProblem<'a> {
    pub fn new(
        model: &'a AsteroidModel,
        regions: &'a [ObservationRegion],
        params: &'a ConstraintPotentialParams,
        x0_minus: InertialState,
        horizon: f64,
        tol: Tolerances,
    ) -> Self {
        Self { field: ScoringField::new(model, regions, params), x0_minus, horizon, tol, min_coast: 0.0 }
    }

    /// Restricts the horizon reduction to `t_h >= t0 + fraction * horizon`.
    pub fn with_min_coast_fraction(self, fraction: f64) -> Self {
        Self { min_coast: fraction.clamp(0.0, 1.0) * self.horizon, ..self }
    }

    pub fn t0(&self) -> f64 {
        self.x0_minus.t
    }

    /// Integrates the augmented system from `t0` to `t_stop` (normalized by the full horizon).
    pub fn integrate(&self, u: &Vector3<f64>, t_stop: f64) -> Result<AugmentedArc<'a>, ScoreError> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ScoreError::InvalidCandidate(format!("horizon must be positive, got {}", self.horizon)));
        }
        if u.iter().any(|c| !c.is_finite()) {
            return Err(ScoreError::InvalidCandidate("non-finite impulse".into()));
        }
        let x0 = apply_impulse(&self.x0_minus, u);
        let mut y0 = [0.0; AUG_DIM];
        y0[..6].copy_from_slice(&x0.to_array());
        for i in 0..6 {
            y0[PHI + i * 6 + i] = 1.0;
        }
        let flow = AugmentedFlow { field: self.field, inv_horizon: 1.0 / self.horizon };
        let t_stop = t_stop.min(self.t0() + self.horizon);
        match self.tol.solver::<AUG_DIM>().integrate(&flow, x0.t, y0, t_stop) {
            Ok(dense) => Ok(AugmentedArc { problem: *self, u: *u, dense }),
            Err(fail) => {
                let partial = AugmentedArc { problem: *self, u: *u, dense: fail.partial };
                let times = partial.sample_times(partial.dense.t_end());
                Err(ScoreError::EvaluationFailure {
                    last_time: fail.last_time,
                    reason: format!("{:?}", fail.kind),
                    partial_trace: partial.trace(&times),
                })
            }
        }
    }

    pub fn evaluate(&self, u: &Vector3<f64>) -> Result<CandidateEvaluation, ScoreError> {
        let arc = self.integrate(u, self.t0() + self.horizon)?;
        let t_min = self.t0() + self.min_coast;
        let mut times = arc.sample_times(arc.t_end());
        if self.min_coast > 0.0 && times.binary_search_by(|t| t.total_cmp(&t_min)).is_err() {
            times.push(t_min);
            times.sort_by(f64::total_cmp);
        }
        let mut trace = Vec::with_capacity(times.len());
        let mut region_hits = vec![0.0; self.field.regions.len()];
        for &t in &times {
            let y = arc.dense.at(t);
            let r = Vector3::new(y[0], y[1], y[2]);
            let (value, scores) = self.field.value_and_scores(t, &r);
            trace.push(TraceSample { t, z: y[Z], z_dot: value / self.horizon });
            for (peak, w) in region_hits.iter_mut().zip(scores) {
                *peak = f64::max(*peak, w);
            }
        }
        let admissible = &trace[trace.partition_point(|s| s.t < t_min)..];
        let (k_best, _) = argmax_trace(admissible);
        let mut t_h = reduce_horizon(admissible);
        if arc.z_at(t_h) < admissible[k_best].z {
            t_h = admissible[k_best].t;
        }
        let state_at_th = arc.state_at(t_h);
        Ok(CandidateEvaluation {
            u: *u,
            objective: arc.z_at(t_h),
            grad_u: arc.eta_at(t_h),
            grad_th: arc.integrand_at(t_h),
            t_h,
            horizon: self.horizon,
            score_trace: trace,
            region_hits,
            state_at_th,
        })
    }
}

/// Dense solution of the augmented system for one impulse.
#[derive(Debug, Clone)]
pub struct AugmentedArc<'a> {
    problem: ScoreProblem<'a>,
    u: Vector3<f64>,
    dense: DenseTrajectory<AUG_DIM>,
}

impl AugmentedArc<'_> {
    pub fn impulse(&self) -> Vector3<f64> {
        self.u
    }

    pub fn t_start(&self) -> f64 {
        self.dense.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.dense.t_end()
    }

    pub fn state_at(&self, t: f64) -> InertialState {
        InertialState::from_slice(&self.dense.at(t)[..6], t)
    }

    pub fn z_at(&self, t: f64) -> f64 {
        self.dense.at(t)[Z]
    }

    pub fn eta_at(&self, t: f64) -> Vector3<f64> {
        let y = self.dense.at(t);
        Vector3::new(y[ETA], y[ETA + 1], y[ETA + 2])
    }

    pub fn stm_at(&self, t: f64) -> StateTransitionMatrix {
        StateTransitionMatrix { phi: nalgebra::Matrix6::from_column_slice(&self.dense.at(t)[PHI..]) }
    }

    /// Instantaneous `z'` at `t`.
    pub fn integrand_at(&self, t: f64) -> f64 {
        let x = self.state_at(t);
        self.problem.field.integrand(t, &x.r).0 / self.problem.horizon
    }

    /// Uniform grid over `[t0, t_stop]` (spacing from the full horizon) merged with step times.
    pub fn sample_times(&self, t_stop: f64) -> Vec<f64> {
        let t0 = self.t_start();
        let dt = self.problem.horizon / TRACE_SAMPLES as f64;
        let mut times: Vec<f64> = (0..=TRACE_SAMPLES)
            .map(|k| if k == TRACE_SAMPLES { t0 + self.problem.horizon } else { t0 + k as f64 * dt })
            .filter(|&t| t <= t_stop)
            .chain(self.dense.step_times().into_iter().filter(|&t| t <= t_stop))
            .collect();
        if times.last().is_none_or(|&t| t < t_stop) {
            times.push(t_stop);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    pub fn trace(&self, times: &[f64]) -> Vec<TraceSample> {
        times.iter().map(|&t| TraceSample { t, z: self.z_at(t), z_dot: self.integrand_at(t) }).collect()
    }
}

fn argmax_trace(trace: &[TraceSample]) -> (usize, f64) {
    let mut best = (0, trace[0].z);
    for (k, s) in trace.iter().enumerate().skip(1) {
        if s.z > best.1 {
            best = (k, s.z);
        }
    }
    best
}

/// Cubic Hermite interpolant of `z` on `[a, b]`; returns the best interior `(t, z)` if it beats both ends.
fn hermite_peak(a: &TraceSample, b: &TraceSample) -> Option<(f64, f64)> {
    let h = b.t - a.t;
    if !(h > 0.0) {
        return None;
    }
    let (za, zb, da, db) = (a.z, b.z, h * a.z_dot, h * b.z_dot);
    let eval = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * za + (s3 - 2.0 * s2 + s) * da + (-2.0 * s3 + 3.0 * s2) * zb + (s3 - s2) * db
    };
    // p'(s) = qa s^2 + qb s + qc
    let qa = 6.0 * za + 3.0 * da - 6.0 * zb + 3.0 * db;
    let qb = -6.0 * za - 4.0 * da + 6.0 * zb - 2.0 * db;
    let qc = da;
    let mut roots = Vec::with_capacity(2);
    if qa.abs() <= 1e-14 * (qb.abs() + qc.abs()) {
        if qb != 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            if q != 0.0 {
                roots.push(qc / q);
            }
            roots.push(q / qa);
        }
    }
    let ends = za.max(zb);
    roots
        .into_iter()
        .filter(|s| *s > 0.0 && *s < 1.0)
        .map(|s| (a.t + s * h, eval(s)))
        .filter(|&(_, z)| z > ends)
        .max_by(|x, y| x.1.total_cmp(&y.1))
}

/// Horizon time maximizing the running score, earliest sample on ties.
///
/// An interior maximum is refined on the cubic Hermite interpolant of the two
/// neighboring intervals, which puts `z'(t_h)` near zero.
pub fn reduce_horizon(trace: &[TraceSample]) -> f64 {
    assert!(!trace.is_empty(), "empty score trace");
    let (k, z_best) = argmax_trace(trace);
    let mut best = (trace[k].t, z_best);
    let neighbors = [k.checked_sub(1).map(|j| (j, k)), (k + 1 < trace.len()).then_some((k, k + 1))];
    for (i, j) in neighbors.into_iter().flatten() {
        if let Some((t, z)) = hermite_peak(&trace[i], &trace[j]) {
            if z > best.1 {
                best = (t, z);
            }
        }
    }
    best.0
}

/// Evaluates one impulse candidate over `[t0, t0 + horizon]`.
pub fn evaluate_candidate(
    model: &AsteroidModel,
    regions: &[ObservationRegion],
    params: &ConstraintPotentialParams,
    x0_minus: &InertialState,
    u: &Vector3<f64>,
    horizon: f64,
    tol: &Tolerances,
) -> Result<CandidateEvaluation, ScoreError> {
    ScoreProblem::new(model, regions, params, *x0_minus, horizon, *tol).evaluate(u)
}
