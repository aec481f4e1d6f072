//! Plot-ready CSV and plain-text summaries of tracked projects and evaluations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::controller::TrackedProject;
use crate::error::{Error, Result};
use crate::persist::write_atomic;
use crate::simulator::EvaluationReport;

pub const PROJECT_CSV_HEADER: &str = "series,t,plan,corridor_low,corridor_high,actual";
pub const EVALUATION_CSV_HEADER: &str =
    "project_id,true_archetype,selected_cluster,cluster_archetype,correct,mad,baseline_mad";

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

/// One `plan` row per grid point followed by one `actual` row per measurement.
pub fn project_csv(project: &TrackedProject) -> String {
    let tau = project.config.tolerance;
    let grid = project.prediction.grid();
    let mut out = String::from(PROJECT_CSV_HEADER);
    out.push('\n');
    for (k, &plan) in project.prediction.values.iter().enumerate() {
        let _ = writeln!(
            out,
            "plan,{},{},{},{},",
            fixed(grid.position(k)),
            fixed(plan),
            fixed(plan * (1.0 - tau)),
            fixed(plan * (1.0 + tau)),
        );
    }
    for &(t, v) in &project.actuals {
        let _ = writeln!(out, "actual,{},,,,{}", fixed(t), fixed(v));
    }
    out
}

pub fn project_summary(project: &TrackedProject) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "project: {}", project.project_id);
    let _ = writeln!(out, "attribute: {}", project.attribute);
    let _ = writeln!(out, "selected cluster: {}", project.selected_cluster_id);
    let _ = writeln!(out, "tolerance: {}", fixed(project.config.tolerance));
    let _ = writeln!(out, "progress: {}", fixed(project.progress()));
    let _ = writeln!(out, "actuals: {}", project.actuals.len());
    if project.overrun {
        let _ = writeln!(out, "overrun: measurements beyond planned duration were capped at t=1");
    }
    let _ = writeln!(out, "events: {}", project.events.len());
    for e in &project.events {
        let _ = writeln!(out, "  {e}");
    }
    out
}

pub fn evaluation_csv(report: &EvaluationReport) -> String {
    let mut out = String::from(EVALUATION_CSV_HEADER);
    out.push('\n');
    for p in &report.projects {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.project_id,
            p.true_archetype,
            p.selected_cluster,
            p.cluster_archetype.map_or_else(String::new, |a| a.to_string()),
            p.correct,
            fixed(p.mad),
            fixed(p.baseline_mad),
        );
    }
    out
}

pub fn evaluation_summary(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "attribute: {}", report.attribute);
    let _ = writeln!(out, "strategy: {}", report.strategy);
    let _ = writeln!(out, "clusters: {}", report.n_clusters);
    let _ = writeln!(out, "train ARI: {}", fixed(report.train_ari));
    let _ = writeln!(
        out,
        "selection accuracy: {}/{} ({})",
        report.selection_correct,
        report.selection_total,
        fixed(report.selection_accuracy)
    );
    let _ = writeln!(out, "mean MAD: {}", fixed(report.mean_mad));
    let _ = writeln!(out, "mean baseline MAD: {}", fixed(report.mean_baseline_mad));
    out
}

fn write_pair(dir: &Path, stem: &str, csv: &str, summary: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let txt_path = dir.join(format!("{stem}.txt"));
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&txt_path, summary.as_bytes())?;
    Ok(vec![csv_path, txt_path])
}

/// Writes `<project_id>.csv` and `<project_id>.txt` into `dir`.
pub fn write_project_report(project: &TrackedProject, dir: &Path) -> Result<Vec<PathBuf>> {
    write_pair(dir, &project.project_id, &project_csv(project), &project_summary(project))
}

/// Writes `evaluation.csv` and `evaluation.txt` into `dir`.
pub fn write_evaluation_report(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    write_pair(dir, "evaluation", &evaluation_csv(report), &evaluation_summary(report))
}
