//! Closed-form objectives on the control ball with known optima, for
//! exercising and benchmarking the explorers.

use std::convert::Infallible;

use nalgebra::Vector3;

use super::Scored;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticEval {
    pub objective: f64,
    pub gradient: Vector3<f64>,
}

impl Scored for SyntheticEval {
    fn objective(&self) -> f64 {
        self.objective
    }

    fn gradient(&self) -> Vector3<f64> {
        self.gradient
    }
}

/// `J(u) = -|u - u*|^2`.
#[derive(Debug, Clone, Copy)]
pub struct ConcaveQuadratic {
    pub optimum: Vector3<f64>,
}

impl ConcaveQuadratic {
    pub fn eval(&self, u: &Vector3<f64>) -> Result<SyntheticEval, Infallible> {
        let d = u - self.optimum;
        Ok(SyntheticEval { objective: -d.norm_squared(), gradient: -2.0 * d })
    }
}

/// Two Gaussian peaks in the stretched coordinate `s = diag(k, 1, 1) u / u_max`.
///
/// The peaks sit at `±separation/2` on the first stretched axis; the one on
/// the positive side is `tall_height` high, the other 1.
#[derive(Debug, Clone, Copy)]
pub struct TwoBasin {
    pub u_max: f64,
    pub stretch: f64,
    pub separation: f64,
    pub tall_height: f64,
    pub tall_width: f64,
    pub short_width: f64,
}

impl TwoBasin {
    pub fn new(u_max: f64) -> Self {
        Self { u_max, stretch: 4.0, separation: 1.2, tall_height: 1.2, tall_width: 0.4, short_width: 0.4 }
    }

    pub fn tall_peak(&self) -> Vector3<f64> {
        Vector3::new(0.5 * self.separation * self.u_max / self.stretch, 0.0, 0.0)
    }

    pub fn short_peak(&self) -> Vector3<f64> {
        -self.tall_peak()
    }

    fn stretched(&self, u: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.stretch * u.x, u.y, u.z) / self.u_max
    }

    pub fn eval(&self, u: &Vector3<f64>) -> Result<SyntheticEval, Infallible> {
        let s = self.stretched(u);
        let jac = Vector3::new(self.stretch, 1.0, 1.0) / self.u_max;
        let mut objective = 0.0;
        let mut gradient = Vector3::zeros();
        for (center, height, width) in [
            (self.stretched(&self.tall_peak()), self.tall_height, self.tall_width),
            (self.stretched(&self.short_peak()), 1.0, self.short_width),
        ] {
            let d = s - center;
            let g = height * (-d.norm_squared() / (2.0 * width * width)).exp();
            objective += g;
            gradient -= g / (width * width) * d.component_mul(&jac);
        }
        Ok(SyntheticEval { objective, gradient })
    }

    /// Whether `u` lies closer to the taller peak than to the shorter one.
    pub fn in_tall_basin(&self, u: &Vector3<f64>) -> bool {
        let s = self.stretched(u);
        (s - self.stretched(&self.tall_peak())).norm() < (s - self.stretched(&self.short_peak())).norm()
    }
}
