//! Adaptive Dormand-Prince 5(4) integration with continuous (dense) output.
//!
//! The stepper follows the classic DOPRI5 layout: seven stages with the
//! first-same-as-last property, an embedded fourth-order error estimate and a
//! PI step-size controller. Every accepted step stores the five coefficient
//! vectors of the fourth-order continuous extension so the solution can be
//! queried anywhere inside the integration span.

use thiserror::Error;

/// Right-hand side of `dy/dt = f(t, y)` on a fixed-size state.
pub trait OdeSystem<const N: usize> {
    fn derivatives(&self, t: f64, y: &[f64; N], dydt: &mut [f64; N]);
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N], &mut [f64; N]),
{
    fn derivatives(&self, t: f64, y: &[f64; N], dydt: &mut [f64; N]) {
        self(t, y, dydt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Step size fell below the floating point resolution of `t`.
    StepUnderflow,
    /// Too many steps for the requested span.
    StepLimit,
    /// Initial state or derivatives were not finite.
    NonFinite,
}

#[derive(Debug, Clone, Error)]
#[error("integration failed ({kind:?}) at t = {last_time}")]
pub struct IntegrationFailure<const N: usize> {
    pub kind: FailureKind,
    pub last_time: f64,
    /// Everything accepted before the failure.
    pub partial: DenseTrajectory<N>,
}

/// One accepted step of the continuous extension.
#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    pub t_start: f64,
    pub h: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t_start) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
        out
    }

    /// State at the end of the step, exactly as produced by the stepper.
    pub fn end_value(&self) -> [f64; N] {
        let mut out = [0.0; N];
        for (o, (a, b)) in out.iter_mut().zip(self.coeffs[0].iter().zip(&self.coeffs[1])) {
            *o = a + b;
        }
        out
    }
}

/// Solution over `[t_start, t_end]` with dense output.
#[derive(Debug, Clone)]
pub struct DenseTrajectory<const N: usize> {
    t_start: f64,
    y_start: [f64; N],
    segments: Vec<DenseSegment<N>>,
    rejected: usize,
    rhs_evals: usize,
}

impl<const N: usize> DenseTrajectory<N> {
    fn new(t_start: f64, y_start: [f64; N]) -> Self {
        Self { t_start, y_start, segments: Vec::new(), rejected: 0, rhs_evals: 0 }
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(self.t_start, |s| s.t_end())
    }

    pub fn initial(&self) -> [f64; N] {
        self.y_start
    }

    pub fn last(&self) -> [f64; N] {
        self.segments.last().map_or(self.y_start, |s| s.end_value())
    }

    pub fn segments(&self) -> &[DenseSegment<N>] {
        &self.segments
    }

    pub fn accepted_steps(&self) -> usize {
        self.segments.len()
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    pub fn rhs_evaluations(&self) -> usize {
        self.rhs_evals
    }

    /// Start time followed by the end time of every accepted step.
    pub fn step_times(&self) -> Vec<f64> {
        std::iter::once(self.t_start).chain(self.segments.iter().map(|s| s.t_end())).collect()
    }

    /// Interpolated solution; `t` is clamped to the integrated span.
    pub fn at(&self, t: f64) -> [f64; N] {
        if self.segments.is_empty() || t <= self.t_start {
            return self.y_start;
        }
        if t >= self.t_end() {
            return self.last();
        }
        let idx = self.segments.partition_point(|s| s.t_end() < t);
        self.segments[idx.min(self.segments.len() - 1)].eval(t)
    }
}

/// Solver settings. `abs_tol` is per component.
#[derive(Debug, Clone)]
pub struct Dopri5<const N: usize> {
    pub rel_tol: f64,
    pub abs_tol: [f64; N],
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

impl<const N: usize> Dopri5<N> {
    pub fn new(rel_tol: f64, abs_tol: [f64; N]) -> Self {
        Self { rel_tol, abs_tol, max_steps: 1_000_000, initial_step: None }
    }

    pub fn uniform(rel_tol: f64, abs_tol: f64) -> Self {
        Self::new(rel_tol, [abs_tol; N])
    }

    fn error_norm(&self, y: &[f64; N], y_new: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sk = self.abs_tol[i] + self.rel_tol * y[i].abs().max(y_new[i].abs());
            let e = err[i] / sk;
            acc += e * e;
        }
        (acc / N as f64).sqrt()
    }

    fn rms_scaled(&self, y: &[f64; N], v: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sk = self.abs_tol[i] + self.rel_tol * y[i].abs();
            acc += (v[i] / sk).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    fn initial_step_guess<S: OdeSystem<N>>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64; N],
        f0: &[f64; N],
        span: f64,
    ) -> f64 {
        let d0 = self.rms_scaled(y0, y0);
        let d1 = self.rms_scaled(y0, f0);
        let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = y0[i] + h0 * f0[i];
        }
        let mut f1 = [0.0; N];
        sys.derivatives(t0 + h0, &y1, &mut f1);
        let mut df = [0.0; N];
        for i in 0..N {
            df[i] = f1[i] - f0[i];
        }
        let d2 = self.rms_scaled(y0, &df) / h0;
        let dmax = d1.max(d2);
        let h1 = if !dmax.is_finite() {
            h0 * 1e-3
        } else if dmax <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dmax).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Integrates forward from `t0` to `t_end`.
    pub fn integrate<S: OdeSystem<N>>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
    ) -> Result<DenseTrajectory<N>, IntegrationFailure<N>> {
        let mut traj = DenseTrajectory::new(t0, y0);
        let fail = |kind, t, traj: DenseTrajectory<N>| IntegrationFailure { kind, last_time: t, partial: traj };
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(fail(FailureKind::NonFinite, t0, traj));
        }
        let span = t_end - t0;
        if span <= 0.0 {
            return Ok(traj);
        }

        let mut t = t0;
        let mut y = y0;
        let mut k1 = [0.0; N];
        sys.derivatives(t, &y, &mut k1);
        traj.rhs_evals += 1;
        if k1.iter().any(|v| !v.is_finite()) {
            return Err(fail(FailureKind::NonFinite, t0, traj));
        }
        let mut h = match self.initial_step {
            Some(h) => h.min(span),
            None => {
                traj.rhs_evals += 1;
                self.initial_step_guess(sys, t, &y, &k1, span)
            }
        };

        let mut k2 = [0.0; N];
        let mut k3 = [0.0; N];
        let mut k4 = [0.0; N];
        let mut k5 = [0.0; N];
        let mut k6 = [0.0; N];
        let mut k7 = [0.0; N];
        let mut ytmp = [0.0; N];
        let mut y_new = [0.0; N];
        let mut err = [0.0; N];
        let mut fac_old: f64 = 1e-4;
        let mut last_rejected = false;

        loop {
            if traj.segments.len() + traj.rejected >= self.max_steps {
                return Err(fail(FailureKind::StepLimit, t, traj));
            }
            if 0.1 * h.abs() <= t.abs().max(1.0) * f64::EPSILON {
                return Err(fail(FailureKind::StepUnderflow, t, traj));
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }

            for i in 0..N {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            sys.derivatives(t + C2 * h, &ytmp, &mut k2);
            for i in 0..N {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.derivatives(t + C3 * h, &ytmp, &mut k3);
            for i in 0..N {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.derivatives(t + C4 * h, &ytmp, &mut k4);
            for i in 0..N {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.derivatives(t + C5 * h, &ytmp, &mut k5);
            for i in 0..N {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_next = if last { t_end } else { t + h };
            sys.derivatives(t_next, &ytmp, &mut k6);
            for i in 0..N {
                y_new[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.derivatives(t_next, &y_new, &mut k7);
            traj.rhs_evals += 6;
            for i in 0..N {
                err[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let err_norm = self.error_norm(&y, &y_new, &err);

            if !err_norm.is_finite() || k7.iter().any(|v| !v.is_finite()) {
                traj.rejected += 1;
                last_rejected = true;
                h *= FAC_MIN;
                continue;
            }

            let fac11 = err_norm.powf(0.2 - BETA * 0.75);
            if err_norm <= 1.0 {
                let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                fac_old = err_norm.max(1e-4);

                let mut coeffs = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    coeffs[0][i] = y[i];
                    coeffs[1][i] = ydiff;
                    coeffs[2][i] = bspl;
                    coeffs[3][i] = ydiff - h * k7[i] - bspl;
                    coeffs[4][i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                traj.segments.push(DenseSegment { t_start: t, h, coeffs });

                t = t_next;
                y = y_new;
                k1 = k7;
                if last {
                    return Ok(traj);
                }
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                last_rejected = false;
                h = h_new;
            } else {
                traj.rejected += 1;
                last_rejected = true;
                h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64; 2], dy: &mut [f64; 2]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn zero_span_returns_initial_state() {
        let solver = Dopri5::<2>::uniform(1e-10, 1e-12);
        let traj = solver.integrate(&oscillator, 3.0, [1.0, 0.0], 3.0).unwrap();
        assert_eq!(traj.last(), [1.0, 0.0]);
        assert_eq!(traj.at(3.0), [1.0, 0.0]);
        assert_eq!(traj.accepted_steps(), 0);
    }

    #[test]
    fn harmonic_oscillator_endpoint_and_dense_output() {
        let solver = Dopri5::<2>::uniform(1e-11, 1e-13);
        let t_end = 10.0;
        let traj = solver.integrate(&oscillator, 0.0, [1.0, 0.0], t_end).unwrap();
        assert_eq!(traj.t_end(), t_end);
        let y = traj.last();
        assert!((y[0] - t_end.cos()).abs() < 1e-9);
        assert!((y[1] + t_end.sin()).abs() < 1e-9);
        for k in 0..=1000 {
            let t = t_end * k as f64 / 1000.0;
            let y = traj.at(t);
            assert!((y[0] - t.cos()).abs() < 1e-8, "dense output at t={t}");
            assert!((y[1] + t.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_output_is_continuous_across_steps() {
        let solver = Dopri5::<2>::uniform(1e-6, 1e-8);
        let traj = solver.integrate(&oscillator, 0.0, [1.0, 0.0], 5.0).unwrap();
        for pair in traj.segments().windows(2) {
            let left = pair[0].eval(pair[0].t_end());
            let right = pair[1].eval(pair[1].t_start);
            for i in 0..2 {
                assert!((left[i] - right[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fifth_order_convergence() {
        // Error ratio between two tolerances should track the order of the method.
        let exact = 4.0f64.cos();
        let run = |tol: f64| {
            let solver = Dopri5::<2>::uniform(tol, tol);
            let traj = solver.integrate(&oscillator, 0.0, [1.0, 0.0], 4.0).unwrap();
            ((traj.last()[0] - exact).abs(), traj.accepted_steps())
        };
        let (e1, n1) = run(1e-6);
        let (e2, n2) = run(1e-9);
        assert!(e2 < e1);
        assert!(n2 > n1);
        let observed = (e1 / e2).ln() / (n2 as f64 / n1 as f64).ln();
        assert!(observed > 3.5, "observed order {observed}");
    }

    #[test]
    fn singularity_reports_underflow_with_last_time() {
        // y' = y^2 blows up at t = 1.
        let blowup = |_t: f64, y: &[f64; 1], dy: &mut [f64; 1]| dy[0] = y[0] * y[0];
        let solver = Dopri5::<1>::uniform(1e-10, 1e-12);
        let err = solver.integrate(&blowup, 0.0, [1.0], 2.0).unwrap_err();
        assert!(matches!(err.kind, FailureKind::StepUnderflow | FailureKind::StepLimit));
        assert!(err.last_time > 0.99 && err.last_time < 1.0);
        assert!((err.partial.t_end() - err.last_time).abs() < 1e-12);
    }

    #[test]
    fn non_finite_initial_state_is_rejected() {
        let solver = Dopri5::<2>::uniform(1e-10, 1e-12);
        let err = solver.integrate(&oscillator, 0.0, [f64::NAN, 0.0], 1.0).unwrap_err();
        assert_eq!(err.kind, FailureKind::NonFinite);
    }
}
