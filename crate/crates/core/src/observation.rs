//! Abstract observation coordinates (range, off-nadir, phase) and the smooth
//! potentials scored on them.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AsteroidModel, InertialState};

/// Angles closer than this to 0 or pi have their Jacobian row zeroed.
pub const ANGLE_SINGULARITY: f64 = 1e-9;
const COINCIDENT_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservationError {
    #[error("spacecraft coincides with the feature")]
    DegenerateGeometry,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFeature {
    /// km, body-fixed
    pub body_fixed_pos: Vector3<f64>,
    /// Outward unit normal, body-fixed.
    pub normal: Vector3<f64>,
}

impl SurfaceFeature {
    /// Feature with the radial direction as its normal.
    pub fn radial(body_fixed_pos: Vector3<f64>) -> Self {
        Self { body_fixed_pos, normal: body_fixed_pos.normalize() }
    }

    pub fn from_lat_lon(lat: f64, lon: f64, radius: f64) -> Self {
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        Self::radial(radius * Vector3::new(cl * co, cl * so, sl))
    }

    pub fn inertial_position(&self, model: &AsteroidModel, t: f64) -> Vector3<f64> {
        model.body_to_inertial(t) * self.body_fixed_pos
    }
}

/// Admissible interval `[center - half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: f64,
    pub half_width: f64,
}

impl Window {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self { center, half_width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractObservation {
    /// km
    pub range: f64,
    /// rad
    pub off_nadir: f64,
    /// rad
    pub phase: f64,
}

impl AbstractObservation {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.range, self.off_nadir, self.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRegion {
    pub name: String,
    pub feature: SurfaceFeature,
    pub range: Window,
    pub off_nadir: Window,
    pub phase: Window,
    pub weight: f64,
}

impl ObservationRegion {
    pub fn windows(&self) -> [Window; 3] {
        [self.range, self.off_nadir, self.phase]
    }

    pub fn validate(&self) -> Result<(), ObservationError> {
        let bad = |m: String| Err(ObservationError::InvalidRegion(format!("{}: {m}", self.name)));
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return bad("weight must be a non-negative number".into());
        }
        for (label, w) in ["range", "off_nadir", "phase"].iter().zip(self.windows()) {
            if !(w.half_width > 0.0) || !w.center.is_finite() || !w.half_width.is_finite() {
                return bad(format!("{label} window needs a finite center and positive half-width"));
            }
        }
        if self.feature.body_fixed_pos.norm() == 0.0 || self.feature.body_fixed_pos.iter().any(|c| !c.is_finite()) {
            return bad("feature position must be non-zero".into());
        }
        if (self.feature.normal.norm() - 1.0).abs() > 1e-12 {
            return bad("feature normal must be a unit vector".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPotentialParams {
    pub barrier_sharpness: f64,
    pub penalty_scale: f64,
}

impl ConstraintPotentialParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.barrier_sharpness > 0.0 && self.barrier_sharpness.is_finite()) {
            return Err("barrier_sharpness must be positive".into());
        }
        if !(self.penalty_scale > 0.0 && self.penalty_scale.is_finite()) {
            return Err("penalty_scale must be positive".into());
        }
        Ok(())
    }
}

/// 3x6 `dy/dx`, with flags for rows zeroed at an angle singularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapJacobian {
    pub matrix: SMatrix<f64, 3, 6>,
    /// `[range, off_nadir, phase]`
    pub degenerate: [bool; 3],
}

impl MapJacobian {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Angle between `a` and `b` and its gradients with respect to each.
fn angle_with_gradients(a: &Vector3<f64>, b: &Vector3<f64>) -> (f64, Option<(Vector3<f64>, Vector3<f64>)>) {
    let na = a.norm();
    let nb = b.norm();
    let theta = a.cross(b).norm().atan2(a.dot(b));
    if theta < ANGLE_SINGULARITY || std::f64::consts::PI - theta < ANGLE_SINGULARITY {
        return (theta, None);
    }
    let (sin, cos) = theta.sin_cos();
    let ah = a / na;
    let bh = b / nb;
    let da = (cos * ah - bh) / (na * sin);
    let db = (cos * bh - ah) / (nb * sin);
    (theta, Some((da, db)))
}

/// Geometry of one region at one instant, in the inertial frame.
pub(crate) struct RegionGeometry {
    pub y: AbstractObservation,
    /// Rows are `d y_k / d r`.
    pub position_jacobian: Matrix3<f64>,
    pub degenerate: [bool; 3],
}

pub(crate) fn region_geometry(
    feature_inertial: &Vector3<f64>,
    r: &Vector3<f64>,
    sun: &Vector3<f64>,
) -> Option<RegionGeometry> {
    let d = r - feature_inertial;
    let range = d.norm();
    if range < COINCIDENT_RANGE {
        return None;
    }
    let (off_nadir, off_grad) = angle_with_gradients(r, &d);
    let (phase, phase_grad) = angle_with_gradients(sun, &d);

    let mut jac = Matrix3::zeros();
    jac.set_row(0, &(d / range).transpose());
    let mut degenerate = [false; 3];
    match off_grad {
        // Both arguments of the off-nadir angle move with r.
        Some((da, db)) => jac.set_row(1, &(da + db).transpose()),
        None => degenerate[1] = true,
    }
    match phase_grad {
        Some((_, db)) => jac.set_row(2, &db.transpose()),
        None => degenerate[2] = true,
    }
    Some(RegionGeometry { y: AbstractObservation { range, off_nadir, phase }, position_jacobian: jac, degenerate })
}

pub fn map_to_abstract(
    model: &AsteroidModel,
    region: &ObservationRegion,
    state: &InertialState,
) -> Result<AbstractObservation, ObservationError> {
    let p = region.feature.inertial_position(model, state.t);
    region_geometry(&p, &state.r, &model.sun_dir).map(|g| g.y).ok_or(ObservationError::DegenerateGeometry)
}

pub fn map_jacobian(
    model: &AsteroidModel,
    region: &ObservationRegion,
    state: &InertialState,
) -> Result<MapJacobian, ObservationError> {
    let p = region.feature.inertial_position(model, state.t);
    let g = region_geometry(&p, &state.r, &model.sun_dir).ok_or(ObservationError::DegenerateGeometry)?;
    let mut matrix = SMatrix::<f64, 3, 6>::zeros();
    matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&g.position_jacobian);
    Ok(MapJacobian { matrix, degenerate: g.degenerate })
}

/// Smooth compactly supported bump `exp(1 - 1/(1 - s^2))` and its derivative.
fn bump(s: f64) -> (f64, f64) {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        return (0.0, 0.0);
    }
    let v = (1.0 - 1.0 / q).exp();
    (v, -2.0 * s * v / (q * q))
}

/// Region score `weight * prod_k bump((y_k - c_k)/w_k)` and its gradient in `y`.
pub fn region_potential(region: &ObservationRegion, y: &AbstractObservation) -> (f64, Vector3<f64>) {
    let yv = y.as_vector();
    let mut vals = [0.0; 3];
    let mut ders = [0.0; 3];
    for (k, w) in region.windows().iter().enumerate() {
        let (v, d) = bump((yv[k] - w.center) / w.half_width);
        if v == 0.0 {
            return (0.0, Vector3::zeros());
        }
        vals[k] = v;
        ders[k] = d / w.half_width;
    }
    let score = region.weight * vals[0] * vals[1] * vals[2];
    let grad = region.weight
        * Vector3::new(ders[0] * vals[1] * vals[2], vals[0] * ders[1] * vals[2], vals[0] * vals[1] * ders[2]);
    (score, grad)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Impact/escape barrier, `value` in `(-2P, 0)`; grad is `dV/dx` (velocity part zero).
pub fn constraint_potential(
    model: &AsteroidModel,
    params: &ConstraintPotentialParams,
    state: &InertialState,
) -> (f64, Vector6<f64>) {
    let (value, dr) = constraint_radial(model, params, state.r.norm());
    let rh = state.r / state.r.norm();
    let g = dr * rh;
    (value, Vector6::new(g.x, g.y, g.z, 0.0, 0.0, 0.0))
}

/// Barrier value and its derivative with respect to `|r|`.
pub(crate) fn constraint_radial(model: &AsteroidModel, params: &ConstraintPotentialParams, r: f64) -> (f64, f64) {
    let k = params.barrier_sharpness;
    let p = params.penalty_scale;
    let a = k * (model.r_impact - r) / model.r_impact;
    let b = k * (r - model.r_escape) / model.r_escape;
    let sa = logistic(a);
    let sb = logistic(b);
    let value = -p * (sa + sb);
    let dvalue = -p * (sa * (1.0 - sa) * (-k / model.r_impact) + sb * (1.0 - sb) * (k / model.r_escape));
    (value, dvalue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn region_at(pos: Vector3<f64>) -> ObservationRegion {
        ObservationRegion {
            name: "t".into(),
            feature: SurfaceFeature::radial(pos),
            range: Window::new(20.0, 15.0),
            off_nadir: Window::new(0.3, 0.5),
            phase: Window::new(0.8, 0.7),
            weight: 2.0,
        }
    }

    #[test]
    fn collinear_geometry() {
        let model = AsteroidModel::eros();
        let t = 0.0;
        let feature = Vector3::new(10.0, 5.0, 3.0);
        let region = region_at(feature);
        let dir = feature.normalize();
        let d = 17.5;
        let s = InertialState::new(feature + d * dir, Vector3::zeros(), t);
        let model = AsteroidModel { sun_dir: dir, ..model };
        let y = map_to_abstract(&model, &region, &s).unwrap();
        assert!((y.range - d).abs() < 1e-12);
        assert!(y.off_nadir.abs() < 1e-7);
        assert!(y.phase.abs() < 1e-7);
    }

    #[test]
    fn orthogonal_sun_gives_right_phase() {
        let model = AsteroidModel { sun_dir: Vector3::z(), ..AsteroidModel::eros() };
        let region = region_at(Vector3::new(12.0, 0.0, 0.0));
        let s = InertialState::new(Vector3::new(30.0, 4.0, 0.0), Vector3::zeros(), 0.0);
        let y = map_to_abstract(&model, &region, &s).unwrap();
        assert!((y.phase - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn coincident_spacecraft_is_degenerate() {
        let model = AsteroidModel::eros();
        let region = region_at(Vector3::new(12.0, 0.0, 0.0));
        let s = InertialState::new(Vector3::new(12.0, 0.0, 0.0), Vector3::zeros(), 0.0);
        assert_eq!(map_to_abstract(&model, &region, &s), Err(ObservationError::DegenerateGeometry));
    }

    #[test]
    fn range_gradient_points_from_feature_to_spacecraft() {
        let model = AsteroidModel::eros();
        let region = region_at(Vector3::new(8.0, 6.0, -4.0));
        let s = InertialState::new(Vector3::new(25.0, -12.0, 9.0), Vector3::new(1.0, 2.0, 3.0), 4321.0);
        let jac = map_jacobian(&model, &region, &s).unwrap();
        let p = region.feature.inertial_position(&model, s.t);
        let u = (s.r - p).normalize();
        for j in 0..3 {
            assert!((jac.matrix[(0, j)] - u[j]).abs() < 1e-15);
        }
        for i in 0..3 {
            for j in 3..6 {
                assert_eq!(jac.matrix[(i, j)], 0.0);
            }
        }
        assert!(!jac.is_degenerate());
    }

    #[test]
    fn singular_angle_row_is_zeroed_and_flagged() {
        let model = AsteroidModel::eros();
        let feature = Vector3::new(10.0, 0.0, 0.0);
        let region = region_at(feature);
        let s = InertialState::new(Vector3::new(30.0, 0.0, 0.0), Vector3::zeros(), 0.0);
        let jac = map_jacobian(&model, &region, &s).unwrap();
        // Spacecraft straight above the feature and the Sun along the same ray.
        assert_eq!(jac.degenerate, [false, true, true]);
        assert_eq!(jac.matrix.row(1).norm(), 0.0);
        assert_eq!(jac.matrix.row(2).norm(), 0.0);
        let anti = AsteroidModel { sun_dir: -Vector3::x(), ..model };
        let y = map_to_abstract(&anti, &region, &s).unwrap();
        assert!((y.phase - PI).abs() < 1e-12);
        assert!(map_jacobian(&anti, &region, &s).unwrap().degenerate[2]);
    }

    #[test]
    fn bump_is_maximal_at_center() {
        let region = region_at(Vector3::new(10.0, 0.0, 0.0));
        let y = AbstractObservation { range: 20.0, off_nadir: 0.3, phase: 0.8 };
        let (score, grad) = region_potential(&region, &y);
        assert_eq!(score, region.weight);
        assert_eq!(grad, Vector3::zeros());
    }

    #[test]
    fn compact_support() {
        let region = region_at(Vector3::new(10.0, 0.0, 0.0));
        for y in [
            AbstractObservation { range: 35.0, off_nadir: 0.3, phase: 0.8 },
            AbstractObservation { range: 20.0, off_nadir: 0.81, phase: 0.8 },
            AbstractObservation { range: 20.0, off_nadir: 0.3, phase: 0.0999 },
        ] {
            let (score, grad) = region_potential(&region, &y);
            assert_eq!(score, 0.0);
            assert_eq!(grad, Vector3::zeros());
        }
    }

    #[test]
    fn corridor_barrier_is_near_zero() {
        let model = AsteroidModel::eros();
        let params = ConstraintPotentialParams { barrier_sharpness: 20.0, penalty_scale: 3.0 };
        let r = (model.r_impact * model.r_escape).sqrt();
        let (v, _) = constraint_potential(&model, &params, &InertialState::new(Vector3::new(0.0, r, 0.0), Vector3::zeros(), 0.0));
        assert!(v <= 0.0 && v >= -1e-3 * params.penalty_scale);
    }

    #[test]
    fn impact_saturation() {
        let model = AsteroidModel::eros();
        let params = ConstraintPotentialParams { barrier_sharpness: 20.0, penalty_scale: 1.0 };
        let (v, g) = constraint_potential(&model, &params, &InertialState::new(Vector3::new(1e-9, 0.0, 0.0), Vector3::zeros(), 0.0));
        assert!((v + logistic(20.0)).abs() < 1e-6);
        assert!(v > -2.0);
        assert_eq!(&g.as_slice()[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn logistic_is_stable_for_large_arguments() {
        assert_eq!(logistic(-800.0), 0.0);
        assert_eq!(logistic(800.0), 1.0);
        assert!((logistic(0.0) - 0.5).abs() < 1e-16);
    }
}
