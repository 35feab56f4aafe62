//! Rotating second-degree gravity field and state / STM propagation.
//!
//! The body spins uniformly about the inertial +z axis; body and inertial
//! frames coincide at `t = 0`. The potential is point mass plus the
//! unnormalized C20 and C22 terms,
//!
//! ```text
//! U(r_b) = mu / r + mu R^2 / r^5 * [ C20 (2 z^2 - x^2 - y^2) / 2 + 3 C22 (x^2 - y^2) ]
//! ```
//!
//! which is a degree-2 solid harmonic over `r^5`, so its Hessian is traceless.

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{DenseTrajectory, Dopri5, IntegrationFailure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid asteroid model: {0}")]
    InvalidModel(String),
    #[error("propagation failed at t = {last_time} s: {reason}")]
    PropagationFailure { last_time: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsteroidModel {
    /// km^3/s^2
    pub mu: f64,
    /// rad/s about +z
    pub spin_rate: f64,
    /// km
    pub ref_radius: f64,
    pub c20: f64,
    pub c22: f64,
    /// km
    pub r_impact: f64,
    /// km
    pub r_escape: f64,
    /// Unit vector toward the Sun, inertial.
    pub sun_dir: Vector3<f64>,
}

impl AsteroidModel {
    pub fn new(
        mu: f64,
        spin_rate: f64,
        ref_radius: f64,
        c20: f64,
        c22: f64,
        r_impact: f64,
        r_escape: f64,
        sun_dir: Vector3<f64>,
    ) -> Result<Self, DynamicsError> {
        let model = Self { mu, spin_rate, ref_radius, c20, c22, r_impact, r_escape, sun_dir };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidModel(m.to_string()));
        let scalars = [self.mu, self.spin_rate, self.ref_radius, self.c20, self.c22, self.r_impact, self.r_escape];
        if scalars.iter().any(|v| !v.is_finite()) || self.sun_dir.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.mu <= 0.0 {
            return bad("mu must be positive");
        }
        if self.ref_radius <= 0.0 {
            return bad("ref_radius must be positive");
        }
        if !(0.0 < self.r_impact && self.r_impact < self.r_escape) {
            return bad("need 0 < r_impact < r_escape");
        }
        if (self.sun_dir.norm() - 1.0).abs() > 1e-12 {
            return bad("sun_dir must be a unit vector");
        }
        Ok(())
    }

    /// Default Eros-like constants (5.27 h rotation).
    pub fn eros() -> Self {
        Self {
            mu: 4.4628e-4,
            spin_rate: 2.0 * std::f64::consts::PI / (5.27 * 3600.0),
            ref_radius: 16.0,
            c20: -0.0525,
            c22: 0.0823,
            r_impact: 18.0,
            r_escape: 400.0,
            sun_dir: Vector3::x(),
        }
    }

    pub fn rotation_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.spin_rate.abs()
    }

    /// Body-fixed to inertial rotation at epoch `t`.
    pub fn body_to_inertial(&self, t: f64) -> Matrix3<f64> {
        let (s, c) = (self.spin_rate * t).sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    /// Degree-2 quadratic form, diagonal with zero trace.
    fn harmonic_coeffs(&self) -> Vector3<f64> {
        let a = -0.5 * self.c20;
        let b = 3.0 * self.c22;
        Vector3::new(a + b, a - b, self.c20)
    }

    /// Gravitational potential (positive convention) at a body-fixed position.
    pub fn potential(&self, r_body: &Vector3<f64>) -> f64 {
        let r2 = r_body.norm_squared();
        let r = r2.sqrt();
        let diag = self.harmonic_coeffs();
        let q = diag.dot(&r_body.component_mul(r_body));
        self.mu / r + self.mu * self.ref_radius.powi(2) * q / (r2 * r2 * r)
    }

    /// Body-frame gravity and its gradient.
    fn body_field(&self, rb: &Vector3<f64>, with_gradient: bool) -> (Vector3<f64>, Matrix3<f64>) {
        let r2 = rb.norm_squared();
        let r = r2.sqrt();
        let inv_r = 1.0 / r;
        let inv_r2 = inv_r * inv_r;
        let inv_r3 = inv_r2 * inv_r;
        let inv_r5 = inv_r3 * inv_r2;
        let inv_r7 = inv_r5 * inv_r2;

        let k = self.mu * self.ref_radius * self.ref_radius;
        let diag = self.harmonic_coeffs();
        let ax = diag.component_mul(rb);
        let q = ax.dot(rb);

        let point = -self.mu * inv_r3 * rb;
        let harmonic = k * (2.0 * inv_r5 * ax - 5.0 * q * inv_r7 * rb);
        let accel = point + harmonic;

        if !with_gradient {
            return (accel, Matrix3::zeros());
        }
        let rrt = rb * rb.transpose();
        let point_grad = self.mu * inv_r3 * (3.0 * inv_r2 * rrt - Matrix3::identity());
        let axrt = ax * rb.transpose();
        let harm_grad = k
            * (2.0 * inv_r5 * Matrix3::from_diagonal(&diag)
                - 10.0 * inv_r7 * (axrt + axrt.transpose())
                - 5.0 * q * inv_r7 * Matrix3::identity()
                + 35.0 * q * inv_r7 * inv_r2 * rrt);
        (accel, point_grad + harm_grad)
    }

    /// Inertial acceleration and (optionally) `da/dr`, no input validation.
    pub(crate) fn field(&self, r: &Vector3<f64>, t: f64, with_gradient: bool) -> (Vector3<f64>, Matrix3<f64>) {
        let rot = self.body_to_inertial(t);
        let rb = rot.transpose() * r;
        let (ab, gb) = self.body_field(&rb, with_gradient);
        let grad = if with_gradient { rot * gb * rot.transpose() } else { gb };
        (rot * ab, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertialState {
    /// km
    pub r: Vector3<f64>,
    /// km/s
    pub v: Vector3<f64>,
    /// s
    pub t: f64,
}

impl InertialState {
    pub fn new(r: Vector3<f64>, v: Vector3<f64>, t: f64) -> Self {
        Self { r, v, t }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z]
    }

    pub fn from_slice(y: &[f64], t: f64) -> Self {
        Self { r: Vector3::new(y[0], y[1], y[2]), v: Vector3::new(y[3], y[4], y[5]), t }
    }

    fn check(&self) -> Result<(), DynamicsError> {
        if !self.t.is_finite() || self.r.iter().chain(self.v.iter()).any(|c| !c.is_finite()) {
            return Err(DynamicsError::InvalidState("non-finite component".into()));
        }
        if self.r.norm() == 0.0 {
            return Err(DynamicsError::InvalidState("position at body center".into()));
        }
        Ok(())
    }
}

/// `dx(t)/dx(t0)`, 6x6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateTransitionMatrix {
    pub phi: Matrix6<f64>,
}

impl StateTransitionMatrix {
    pub fn identity() -> Self {
        Self { phi: Matrix6::identity() }
    }

    pub fn determinant(&self) -> f64 {
        self.phi.determinant()
    }

    pub(crate) fn from_column_major(data: &[f64]) -> Self {
        Self { phi: Matrix6::from_column_slice(&data[..36]) }
    }
}

/// Relative tolerance plus absolute tolerances for the position and velocity blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs_position: f64,
    pub abs_velocity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-10, abs_position: 1e-12, abs_velocity: 1e-12 }
    }
}

impl Tolerances {
    pub fn tightened(&self, factor: f64) -> Self {
        Self { rel: self.rel / factor, abs_position: self.abs_position / factor, abs_velocity: self.abs_velocity / factor }
    }

    /// Solver for an `N`-dimensional system whose first six components are the state.
    pub(crate) fn solver<const N: usize>(&self) -> Dopri5<N> {
        let extra = self.abs_position.min(self.abs_velocity);
        let mut abs = [extra; N];
        for (i, a) in abs.iter_mut().enumerate().take(6) {
            *a = if i < 3 { self.abs_position } else { self.abs_velocity };
        }
        Dopri5::new(self.rel, abs)
    }
}

pub fn acceleration(model: &AsteroidModel, state: &InertialState) -> Result<Vector3<f64>, DynamicsError> {
    state.check()?;
    Ok(model.field(&state.r, state.t, false).0)
}

/// `df/dx` of the first-order system; the velocity-sensitivity blocks are zero.
pub fn jacobian(model: &AsteroidModel, state: &InertialState) -> Result<Matrix6<f64>, DynamicsError> {
    state.check()?;
    let (_, grad) = model.field(&state.r, state.t, true);
    Ok(system_jacobian(&grad))
}

fn system_jacobian(grad: &Matrix3<f64>) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(grad);
    a
}

pub(crate) fn state_derivative(model: &AsteroidModel, t: f64, y: &[f64], dy: &mut [f64]) -> Matrix3<f64> {
    let r = Vector3::new(y[0], y[1], y[2]);
    let (a, grad) = model.field(&r, t, true);
    dy[0] = y[3];
    dy[1] = y[4];
    dy[2] = y[5];
    dy[3] = a.x;
    dy[4] = a.y;
    dy[5] = a.z;
    grad
}

/// `dPhi/dt = A Phi` for column-major `phi` with `A = [[0, I], [G, 0]]`.
pub(crate) fn stm_derivative(grad: &Matrix3<f64>, phi: &[f64], dphi: &mut [f64]) {
    for col in 0..6 {
        let c = &phi[col * 6..col * 6 + 6];
        let d = &mut dphi[col * 6..col * 6 + 6];
        d[0] = c[3];
        d[1] = c[4];
        d[2] = c[5];
        for row in 0..3 {
            d[3 + row] = grad[(row, 0)] * c[0] + grad[(row, 1)] * c[1] + grad[(row, 2)] * c[2];
        }
    }
}

struct StateFlow<'a>(&'a AsteroidModel);

impl crate::ode::OdeSystem<6> for StateFlow<'_> {
    fn derivatives(&self, t: f64, y: &[f64; 6], dy: &mut [f64; 6]) {
        let r = Vector3::new(y[0], y[1], y[2]);
        let (a, _) = self.0.field(&r, t, false);
        dy[..3].copy_from_slice(&y[3..]);
        dy[3] = a.x;
        dy[4] = a.y;
        dy[5] = a.z;
    }
}

struct StmFlow<'a>(&'a AsteroidModel);

impl crate::ode::OdeSystem<42> for StmFlow<'_> {
    fn derivatives(&self, t: f64, y: &[f64; 42], dy: &mut [f64; 42]) {
        let grad = state_derivative(self.0, t, &y[..6], &mut dy[..6]);
        stm_derivative(&grad, &y[6..], &mut dy[6..]);
    }
}

fn failure<const N: usize>(e: IntegrationFailure<N>) -> DynamicsError {
    DynamicsError::PropagationFailure { last_time: e.last_time, reason: format!("{:?}", e.kind) }
}

fn check_span(state: &InertialState, t_end: f64) -> Result<(), DynamicsError> {
    state.check()?;
    if !(t_end >= state.t) {
        return Err(DynamicsError::InvalidState(format!("t_end {t_end} precedes epoch {}", state.t)));
    }
    Ok(())
}

/// Propagated state with dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dense: DenseTrajectory<6>,
}

impl Trajectory {
    pub fn state_at(&self, t: f64) -> InertialState {
        InertialState::from_slice(&self.dense.at(t), t.clamp(self.dense.t_start(), self.dense.t_end()))
    }

    pub fn final_state(&self) -> InertialState {
        InertialState::from_slice(&self.dense.last(), self.dense.t_end())
    }

    pub fn step_times(&self) -> Vec<f64> {
        self.dense.step_times()
    }

    pub fn dense(&self) -> &DenseTrajectory<6> {
        &self.dense
    }
}

pub fn propagate(
    model: &AsteroidModel,
    state: &InertialState,
    t_end: f64,
    tol: &Tolerances,
) -> Result<Trajectory, DynamicsError> {
    check_span(state, t_end)?;
    let dense = tol.solver::<6>().integrate(&StateFlow(model), state.t, state.to_array(), t_end).map_err(failure)?;
    Ok(Trajectory { dense })
}

/// Joint state + STM solution (42 components, STM stored column-major).
#[derive(Debug, Clone)]
pub struct StmTrajectory {
    dense: DenseTrajectory<42>,
}

impl StmTrajectory {
    pub fn state_at(&self, t: f64) -> InertialState {
        InertialState::from_slice(&self.dense.at(t)[..6], t.clamp(self.dense.t_start(), self.dense.t_end()))
    }

    pub fn stm_at(&self, t: f64) -> StateTransitionMatrix {
        StateTransitionMatrix::from_column_major(&self.dense.at(t)[6..])
    }

    pub fn final_state(&self) -> InertialState {
        InertialState::from_slice(&self.dense.last()[..6], self.dense.t_end())
    }

    pub fn final_stm(&self) -> StateTransitionMatrix {
        StateTransitionMatrix::from_column_major(&self.dense.last()[6..])
    }

    /// STM at the start and at the end of every accepted step.
    pub fn stm_history(&self) -> Vec<(f64, StateTransitionMatrix)> {
        std::iter::once((self.dense.t_start(), StateTransitionMatrix::identity()))
            .chain(
                self.dense
                    .segments()
                    .iter()
                    .map(|s| (s.t_end(), StateTransitionMatrix::from_column_major(&s.end_value()[6..]))),
            )
            .collect()
    }
}

pub fn propagate_with_stm(
    model: &AsteroidModel,
    state: &InertialState,
    t_end: f64,
    tol: &Tolerances,
) -> Result<StmTrajectory, DynamicsError> {
    check_span(state, t_end)?;
    let mut y0 = [0.0; 42];
    y0[..6].copy_from_slice(&state.to_array());
    for i in 0..6 {
        y0[6 + i * 6 + i] = 1.0;
    }
    let dense = tol.solver::<42>().integrate(&StmFlow(model), state.t, y0, t_end).map_err(failure)?;
    Ok(StmTrajectory { dense })
}
