use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use reachgrad_core::{run_mission_with, ExplorerMethod, ScenarioFile};
use serde::Serialize;

use crate::{create_out_dir, fmt_f64, CliError};

/// One (method, seed) mission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub method: ExplorerMethod,
    pub seed: u64,
    /// Summed over all planned arcs.
    pub fcn_evals: usize,
    pub arcs_completed: usize,
    /// Fraction of regions visited, in [0, 1].
    pub goal_achievement: f64,
    /// Committed objective per arc.
    pub best_j: Vec<f64>,
    pub error: Option<String>,
}

/// Runs every (method, seed) pair. Pairs may run concurrently; rows come back
/// in (method, seed) order as requested.
pub fn benchmark_rows(scenario: &ScenarioFile, methods: &[ExplorerMethod], seeds: &[u64]) -> Vec<BenchmarkRow> {
    let pairs: Vec<(ExplorerMethod, u64)> =
        methods.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    pairs
        .par_iter()
        .map(|&(method, seed)| {
            let sc = ScenarioFile { seed, ..scenario.clone() };
            let report = run_mission_with(&sc, method, sc.planner.n_arcs);
            if let Some(e) = &report.failure {
                log::warn!("{method} seed {seed}: {e}");
            }
            BenchmarkRow {
                method,
                seed,
                fcn_evals: report.total_evals,
                arcs_completed: report.arcs.len(),
                goal_achievement: report.goal_achievement,
                best_j: report.arcs.iter().map(|a| a.evaluation.objective).collect(),
                error: report.failure,
            }
        })
        .collect()
}

/// `benchmark.csv` contents.
pub fn render_rows(rows: &[BenchmarkRow], n_arcs: usize) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["method", "seed", "fcn_evals", "arcs_completed", "goal_achievement"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n_arcs).map(|j| format!("best_j_arc{j}")));
    header.push("error".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.method.to_string(),
            r.seed.to_string(),
            r.fcn_evals.to_string(),
            r.arcs_completed.to_string(),
            fmt_f64(r.goal_achievement),
        ];
        rec.extend((0..n_arcs).map(|j| r.best_j.get(j).map(|&x| fmt_f64(x)).unwrap_or_default()));
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Per-method aggregate in the layout of the usual explorer comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: ExplorerMethod,
    pub runs: usize,
    pub failed_runs: usize,
    /// Mean evaluations per completed arc.
    pub fcn_evals_per_arc: f64,
    /// Percent.
    pub goal_achievement_mean: f64,
    pub goal_achievement_min: f64,
    pub goal_achievement_max: f64,
    /// Mean over seeds of the summed committed J relative to the Monte Carlo
    /// run of the same seed, in percent. `None` without a usable reference.
    pub j_vs_gt: Option<f64>,
}

pub fn summarize(rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    let mut methods: Vec<ExplorerMethod> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let gt_total = |seed: u64, n: usize| -> Option<f64> {
        let gt = rows.iter().find(|r| r.method == ExplorerMethod::MonteCarlo && r.seed == seed)?;
        (gt.best_j.len() >= n).then(|| gt.best_j[..n].iter().sum::<f64>()).filter(|&s| s > 0.0)
    };
    methods
        .into_iter()
        .map(|method| {
            let mine: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.method == method).collect();
            let n = mine.len() as f64;
            let ga: Vec<f64> = mine.iter().map(|r| 100.0 * r.goal_achievement).collect();
            let arcs: usize = mine.iter().map(|r| r.arcs_completed).sum();
            let evals: usize = mine.iter().map(|r| r.fcn_evals).sum();
            let ratios: Vec<f64> = mine
                .iter()
                .filter_map(|r| gt_total(r.seed, r.best_j.len()).map(|g| 100.0 * r.best_j.iter().sum::<f64>() / g))
                .collect();
            SummaryRow {
                method,
                runs: mine.len(),
                failed_runs: mine.iter().filter(|r| r.error.is_some()).count(),
                fcn_evals_per_arc: if arcs == 0 { 0.0 } else { evals as f64 / arcs as f64 },
                goal_achievement_mean: ga.iter().sum::<f64>() / n,
                goal_achievement_min: ga.iter().copied().fold(f64::INFINITY, f64::min),
                goal_achievement_max: ga.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                j_vs_gt: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            }
        })
        .collect()
}

pub fn render_summary_csv(summary: &[SummaryRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "runs",
        "failed_runs",
        "fcn_evals_per_arc",
        "goal_achievement_mean_pct",
        "goal_achievement_min_pct",
        "goal_achievement_max_pct",
        "j_vs_gt_pct",
    ])?;
    for s in summary {
        w.write_record([
            s.method.to_string(),
            s.runs.to_string(),
            s.failed_runs.to_string(),
            fmt_f64(s.fcn_evals_per_arc),
            fmt_f64(s.goal_achievement_mean),
            fmt_f64(s.goal_achievement_min),
            fmt_f64(s.goal_achievement_max),
            s.j_vs_gt.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn render_summary_markdown(summary: &[SummaryRow]) -> String {
    let mut md = String::from("| Method | Fcn Eval | Goal Achievements | J vs GT | Runs |\n|---|---:|---:|---:|---:|\n");
    for s in summary {
        let label = match s.method {
            ExplorerMethod::MonteCarlo => "GT".to_string(),
            m => m.name().to_uppercase(),
        };
        let j = s.j_vs_gt.map_or("-".to_string(), |v| format!("{v:.1}%"));
        let _ = writeln!(
            md,
            "| {label} | {:.0} | {:.0}% ({:.0}-{:.0}%) | {j} | {}{} |",
            s.fcn_evals_per_arc,
            s.goal_achievement_mean,
            s.goal_achievement_min,
            s.goal_achievement_max,
            s.runs,
            if s.failed_runs > 0 { format!(" ({} failed)", s.failed_runs) } else { String::new() },
        );
    }
    md
}

/// Writes `benchmark.csv`, `summary.csv` and `summary.md`.
pub fn cmd_benchmark(
    scenario: &ScenarioFile,
    methods: &[ExplorerMethod],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<BenchmarkRow>, CliError> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(anyhow::anyhow!("benchmark needs at least one method and one seed").into());
    }
    create_out_dir(out_dir)?;
    let rows = benchmark_rows(scenario, methods, seeds);
    std::fs::write(out_dir.join("benchmark.csv"), render_rows(&rows, scenario.planner.n_arcs)?)?;
    let summary = summarize(&rows);
    std::fs::write(out_dir.join("summary.csv"), render_summary_csv(&summary)?)?;
    std::fs::write(out_dir.join("summary.md"), render_summary_markdown(&summary))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: ExplorerMethod, seed: u64, ga: f64, j: Vec<f64>) -> BenchmarkRow {
        BenchmarkRow { method, seed, fcn_evals: 100 * j.len(), arcs_completed: j.len(), goal_achievement: ga, best_j: j, error: None }
    }

    #[test]
    fn summary_references_the_monte_carlo_run_of_each_seed() {
        let rows = vec![
            row(ExplorerMethod::Nte, 0, 0.8, vec![1.0, 1.0]),
            row(ExplorerMethod::Nte, 1, 0.6, vec![0.5, 0.5]),
            row(ExplorerMethod::MonteCarlo, 0, 1.0, vec![2.0, 2.0]),
            row(ExplorerMethod::MonteCarlo, 1, 1.0, vec![1.0, 1.0]),
        ];
        let s = summarize(&rows);
        assert_eq!(s[0].method, ExplorerMethod::Nte);
        assert!((s[0].goal_achievement_mean - 70.0).abs() < 1e-12);
        assert_eq!(s[0].j_vs_gt, Some(50.0));
        assert_eq!(s[1].j_vs_gt, Some(100.0));
        assert_eq!(s[0].fcn_evals_per_arc, 100.0);
        assert!(render_summary_markdown(&s).contains("| GT |"));
    }

    #[test]
    fn short_rows_leave_trailing_cells_empty() {
        let mut failed = row(ExplorerMethod::Hsb, 4, 0.1, vec![0.25]);
        failed.error = Some("arc 1: boom".into());
        let text = render_rows(&[failed], 3).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,seed,fcn_evals,arcs_completed,goal_achievement,best_j_arc0,best_j_arc1,best_j_arc2,error");
        assert_eq!(lines[1], "hsb,4,100,1,0.1,0.25,,,arc 1: boom");
    }
}
