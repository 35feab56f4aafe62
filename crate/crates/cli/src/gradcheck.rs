use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use reachgrad_core::{sample_control_ball, ScenarioFile, ScoreProblem, Vector3};
use serde::Serialize;

use crate::{create_out_dir, fmt_f64, CliError};

/// Below this finite-difference gradient norm the error is reported as absolute.
pub const ABSOLUTE_BELOW: f64 = 1e-6;
/// The command fails when any relative error exceeds this...
pub const FAIL_RELATIVE: f64 = 1e-3;
/// ...or any absolute error exceeds this.
pub const FAIL_ABSOLUTE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub candidate: usize,
    pub u: [f64; 3],
    pub t_h: f64,
    pub analytic: [f64; 3],
    pub fd: [f64; 3],
    /// `|analytic - fd| / |fd|`, or `|analytic - fd|` when `relative` is false.
    pub error: f64,
    pub relative: bool,
}

impl GradcheckRow {
    pub fn passes(&self) -> bool {
        if self.relative {
            self.error <= FAIL_RELATIVE
        } else {
            self.error <= FAIL_ABSOLUTE
        }
    }
}

/// Finite-difference step for a control bound, km/s.
pub fn fd_step(u_max: f64) -> f64 {
    if u_max > 0.0 {
        1e-3 * u_max
    } else {
        1e-9
    }
}

/// Samples `n` admissible candidates and compares the analytic impulse
/// gradient against central differences of `z` at the candidate's own `t_h`.
pub fn gradcheck(scenario: &ScenarioFile, n: usize) -> Result<Vec<GradcheckRow>, CliError> {
    if n == 0 {
        return Err(anyhow::anyhow!("gradcheck needs at least one candidate").into());
    }
    let (model, regions, params) = (scenario.model(), scenario.regions(), scenario.params());
    let settings = scenario.planner_settings();
    let problem = ScoreProblem::new(&model, &regions, &params, scenario.initial_state(), settings.horizon, scenario.tolerances())
        .with_min_coast_fraction(settings.min_coast_fraction);
    let u_max = scenario.constraints.u_max;
    let h = fd_step(u_max);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut evaluated = Vec::with_capacity(n);
    let mut attempts = 0;
    while evaluated.len() < n {
        if attempts >= 20 * n {
            return Err(anyhow::anyhow!("only {} of {attempts} sampled candidates were admissible", evaluated.len()).into());
        }
        let batch = sample_control_ball(&mut rng, u_max, n - evaluated.len());
        attempts += batch.len();
        let results: Vec<_> = batch.par_iter().map(|u| (*u, problem.evaluate(u))).collect();
        for (u, res) in results {
            match res {
                Ok(eval) => evaluated.push((u, eval)),
                Err(e) => log::debug!("skipping inadmissible candidate {u:?}: {e}"),
            }
        }
    }

    evaluated
        .par_iter()
        .enumerate()
        .map(|(candidate, (u, eval))| {
            let z = |v: Vector3<f64>| problem.integrate(&v, eval.t_h).map(|arc| arc.z_at(eval.t_h));
            let mut fd = [0.0; 3];
            for (k, slot) in fd.iter_mut().enumerate() {
                let e = Vector3::ith(k, h);
                *slot = (z(u + e).map_err(anyhow::Error::from)? - z(u - e).map_err(anyhow::Error::from)?) / (2.0 * h);
            }
            let fd_v = Vector3::from(fd);
            let diff = (eval.grad_u - fd_v).norm();
            let relative = fd_v.norm() >= ABSOLUTE_BELOW;
            Ok(GradcheckRow {
                candidate,
                u: [u.x, u.y, u.z],
                t_h: eval.t_h,
                analytic: [eval.grad_u.x, eval.grad_u.y, eval.grad_u.z],
                fd,
                error: if relative { diff / fd_v.norm() } else { diff },
                relative,
            })
        })
        .collect()
}

pub fn render_rows(rows: &[GradcheckRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "candidate", "ux", "uy", "uz", "t_h", "analytic_x", "analytic_y", "analytic_z", "fd_x", "fd_y", "fd_z", "error",
        "error_kind",
    ])?;
    for r in rows {
        let mut rec = vec![r.candidate.to_string()];
        rec.extend(r.u.map(fmt_f64));
        rec.push(fmt_f64(r.t_h));
        rec.extend(r.analytic.map(fmt_f64));
        rec.extend(r.fd.map(fmt_f64));
        rec.push(fmt_f64(r.error));
        rec.push(if r.relative { "relative" } else { "absolute" }.into());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `gradcheck.csv`; fails when any candidate is above tolerance.
pub fn cmd_gradcheck(scenario: &ScenarioFile, n: usize, out_dir: &Path) -> Result<Vec<GradcheckRow>, CliError> {
    create_out_dir(out_dir)?;
    let rows = gradcheck(scenario, n)?;
    std::fs::write(out_dir.join("gradcheck.csv"), render_rows(&rows)?)?;
    let failed = rows.iter().filter(|r| !r.passes()).count();
    let worst = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    log::info!("gradcheck: {} candidates, worst error {worst:e}", rows.len());
    if failed > 0 {
        return Err(CliError::Gradcheck { failed, total: rows.len(), worst });
    }
    Ok(rows)
}
