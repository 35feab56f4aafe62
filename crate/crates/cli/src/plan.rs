use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use reachgrad_core::{run_mission_with, ExplorerMethod, MissionReport, ScenarioFile};
use serde::Serialize;

use crate::{create_out_dir, fmt_f64, CliError};

/// Contents of `mission.json`.
#[derive(Debug, Serialize)]
pub struct MissionDocument<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    /// The only field that differs between identical runs.
    pub generated_unix_s: u64,
    pub scenario: &'a ScenarioFile,
    pub report: &'a MissionReport,
}

/// Runs the mission and writes `trajectory.csv`, `mission.json` and one
/// `exploration_arc{j}.csv` per planned arc. On a plan failure the truncated
/// report is still written before the error is returned.
pub fn cmd_plan(
    scenario: &ScenarioFile,
    method: Option<ExplorerMethod>,
    n_arcs: Option<usize>,
    out_dir: &Path,
) -> Result<MissionReport, CliError> {
    create_out_dir(out_dir)?;
    let method = method.unwrap_or(scenario.explorer.method);
    let n_arcs = n_arcs.unwrap_or(scenario.planner.n_arcs);
    let mut echo = scenario.clone();
    echo.explorer.method = method;
    echo.planner.n_arcs = n_arcs;

    let report = run_mission_with(&echo, method, n_arcs);
    write_trajectory(&echo, &report, &out_dir.join("trajectory.csv"))?;
    for arc in &report.arcs {
        write_exploration(arc, &out_dir.join(format!("exploration_arc{}.csv", arc.arc_index)))?;
    }
    let generated_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let doc = MissionDocument {
        tool: "reachgrad",
        version: env!("CARGO_PKG_VERSION"),
        generated_unix_s,
        scenario: &echo,
        report: &report,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?;
    std::fs::write(out_dir.join("mission.json"), json + "\n")?;

    log::info!(
        "{} arcs, goal achievement {:.0}%, {} evaluations",
        report.arcs.len(),
        100.0 * report.goal_achievement,
        report.total_evals
    );
    match &report.failure {
        Some(reason) => Err(CliError::Plan(reason.clone())),
        None => Ok(report),
    }
}

fn write_trajectory(scenario: &ScenarioFile, report: &MissionReport, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> =
        ["arc", "t", "rx", "ry", "rz", "vx", "vy", "vz", "z", "z_dot"].iter().map(|s| s.to_string()).collect();
    header.extend(scenario.regions.iter().map(|r| format!("omega_{}", r.name)));
    w.write_record(&header)?;
    for (arc, s) in report.trajectory() {
        let mut row = vec![arc.to_string()];
        row.extend([s.t, s.r.x, s.r.y, s.r.z, s.v.x, s.v.y, s.v.z, s.z, s.z_dot].map(fmt_f64));
        row.extend(s.region_scores.iter().map(|&w| fmt_f64(w)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_exploration(arc: &reachgrad_core::ArcPlan, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["eval_index", "ux", "uy", "uz", "t_h", "J"])?;
    if let Some(result) = &arc.explorer_result {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        for h in &result.history {
            w.write_record([
                h.index.to_string(),
                fmt_f64(h.u.x),
                fmt_f64(h.u.y),
                fmt_f64(h.u.z),
                opt(h.t_h),
                opt(h.objective),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
