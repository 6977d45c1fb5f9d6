//! Relative rate error and the appendix-table fixture check.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed gap between a recomputed and a printed error cell, percentage points.
pub const FIXTURE_TOLERANCE_PP: f64 = 0.01;

/// |estimate − truth| / truth × 100.
pub fn error_rate(estimate_bpm: f64, truth_bpm: f64) -> Result<f64> {
    if !(truth_bpm > 0.0) || !truth_bpm.is_finite() {
        return Err(Error::InvalidTruth(truth_bpm));
    }
    Ok((estimate_bpm - truth_bpm).abs() / truth_bpm * 100.0)
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureRow {
    table_id: String,
    subject: u32,
    scenario: String,
    rr_true: f64,
    hr_true: f64,
    method: String,
    rr_est: f64,
    hr_est: f64,
    #[serde(rename = "rr_err_paper")]
    rr_err_printed: f64,
    #[serde(rename = "hr_err_paper")]
    hr_err_printed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDeviation {
    pub table_id: String,
    pub subject: u32,
    pub scenario: String,
    pub method: String,
    pub metric: String,
    pub recomputed: f64,
    pub printed: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TableCount {
    pub cells: usize,
    pub within_tolerance: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub rows: usize,
    pub cells: usize,
    pub within_tolerance: usize,
    pub per_table: BTreeMap<String, TableCount>,
    pub deviations: Vec<CellDeviation>,
}

impl FixtureReport {
    pub fn fraction_within(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.within_tolerance as f64 / self.cells as f64
        }
    }
}

/// Recompute every error cell of a transcribed fixture.
pub fn verify_appendix_fixture<R: Read>(reader: R) -> Result<FixtureReport> {
    const HEADER: [&str; 10] = [
        "table_id",
        "subject",
        "scenario",
        "rr_true",
        "hr_true",
        "method",
        "rr_est",
        "hr_est",
        "rr_err_paper",
        "hr_err_paper",
    ];
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Fixture(e.to_string()))?
        .clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Fixture(format!(
            "unexpected header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut report = FixtureReport::default();
    for (line, row) in rdr.deserialize::<FixtureRow>().enumerate() {
        let row = row.map_err(|e| Error::Fixture(format!("row {}: {e}", line + 2)))?;
        report.rows += 1;
        for (metric, est, truth, printed) in [
            ("rr", row.rr_est, row.rr_true, row.rr_err_printed),
            ("hr", row.hr_est, row.hr_true, row.hr_err_printed),
        ] {
            let recomputed = error_rate(est, truth)
                .map_err(|e| Error::Fixture(format!("row {}: {e}", line + 2)))?;
            let entry = report.per_table.entry(row.table_id.clone()).or_default();
            entry.cells += 1;
            report.cells += 1;
            if (recomputed - printed).abs() <= FIXTURE_TOLERANCE_PP + 1e-9 {
                entry.within_tolerance += 1;
                report.within_tolerance += 1;
            } else {
                report.deviations.push(CellDeviation {
                    table_id: row.table_id.clone(),
                    subject: row.subject,
                    scenario: row.scenario.clone(),
                    method: row.method.clone(),
                    metric: metric.to_string(),
                    recomputed,
                    printed,
                });
            }
        }
    }
    if report.rows == 0 {
        return Err(Error::Fixture("fixture has no rows".into()));
    }
    Ok(report)
}

pub fn verify_appendix_file(path: &std::path::Path) -> Result<FixtureReport> {
    verify_appendix_fixture(std::fs::File::open(path)?)
}
