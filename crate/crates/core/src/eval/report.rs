//! Report files: a JSON summary and CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{CheckpointRow, EvalReport, Metrics, QueryRecord, SweepRow};
use crate::error::{Error, Result};

/// Everything in an [`EvalReport`] except the per-query records.
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary<'a> {
    pub edits: usize,
    pub queries: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub curve: &'a [CheckpointRow],
}

impl<'a> From<&'a EvalReport> for ReportSummary<'a> {
    fn from(r: &'a EvalReport) -> Self {
        ReportSummary {
            edits: r.edits,
            queries: r.records.len(),
            metrics: r.metrics,
            curve: &r.curve,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            location: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-query table with columns `case_id, query_type, query, expected, got,
/// pass, fallback_used, error`.
pub fn write_records_csv(records: &[QueryRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "case_id",
        "query_type",
        "query",
        "expected",
        "got",
        "pass",
        "fallback_used",
        "error",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([
            r.case_id.as_str(),
            r.query_type.as_str(),
            &r.query,
            &r.expected,
            &r.got,
            if r.pass { "true" } else { "false" },
            if r.fallback_used { "true" } else { "false" },
            r.error.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per swept value.
pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "parameter",
        "value",
        "reliability",
        "generality",
        "locality",
        "average",
        "error",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in rows {
        let parameter = match r.parameter {
            super::SweepParameter::Alpha => "alpha",
            super::SweepParameter::K => "k",
        };
        w.write_record([
            parameter.to_string(),
            r.value.to_string(),
            cell(r.metrics.reliability),
            cell(r.metrics.generality),
            cell(r.metrics.locality),
            cell(r.metrics.average),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `summary.json` and `records.csv` into `dir`, returning their paths.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&ReportSummary::from(report)).expect("summary serializes");
    fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;
    let records = dir.join("records.csv");
    write_records_csv(&report.records, &records)?;
    Ok((summary, records))
}
