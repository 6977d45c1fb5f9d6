//! CSV/JSON report files for a sweep.

use std::path::{Path, PathBuf};

use super::sweep::{summarize, SweepSummary, TrialRecord};
use crate::error::{Error, Result};

pub const TRIALS_HEADER: [&str; 8] = [
    "scenario",
    "method",
    "rr_true",
    "hr_true",
    "rr_est",
    "hr_est",
    "rr_error_pct",
    "hr_error_pct",
];

fn num(v: f64, decimals: usize) -> String {
    if v.is_finite() {
        format!("{v:.decimals$}")
    } else {
        String::new()
    }
}

fn finish(w: csv::Writer<Vec<u8>>, path: &Path) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes trials.csv, summary.json, heatmap.csv and boxplot.csv.
pub fn emit_reports(
    records: &[TrialRecord],
    out_dir: &Path,
) -> Result<(SweepSummary, Vec<PathBuf>)> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to report".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let summary = summarize(records);

    let trials = out_dir.join("trials.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRIALS_HEADER)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            num(r.rr_true, 6),
            num(r.hr_true, 6),
            num(r.rr_est, 6),
            num(r.hr_est, 6),
            num(r.rr_error_pct, 2),
            num(r.hr_error_pct, 2),
        ])?;
    }
    finish(w, &trials)?;

    let heatmap = out_dir.join("heatmap.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "distance_m",
        "state",
        "rr_median_error_pct",
        "hr_median_error_pct",
    ])?;
    for c in &summary.cells {
        w.write_record([
            c.method.to_string(),
            c.distance_m.to_string(),
            c.state.to_string(),
            num(c.rr.median, 4),
            num(c.hr.median, 4),
        ])?;
    }
    finish(w, &heatmap)?;

    let boxplot = out_dir.join("boxplot.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "distance_m",
        "state",
        "metric",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "n",
    ])?;
    for c in &summary.cells {
        for (metric, q) in [("rr", &c.rr), ("hr", &c.hr)] {
            w.write_record([
                c.method.to_string(),
                c.distance_m.to_string(),
                c.state.to_string(),
                metric.to_string(),
                num(q.min, 4),
                num(q.q1, 4),
                num(q.median, 4),
                num(q.q3, 4),
                num(q.max, 4),
                q.n.to_string(),
            ])?;
        }
    }
    finish(w, &boxplot)?;

    let summary_path = out_dir.join("summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok((summary, vec![trials, summary_path, heatmap, boxplot]))
}
