//! records.jsonl, summary.csv and constants.csv writers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use qhypercube::record::{CheckRecord, Status};

use crate::error::{CliError, CliResult};

pub const RECORDS: &str = "records.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const CONSTANTS: &str = "constants.csv";

/// 17 significant digits; blank for missing or non-finite values.
pub fn real(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        Some(v) if v.is_nan() => String::new(),
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_records(dir: &Path, records: &[CheckRecord]) -> CliResult<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_json_line());
        s.push('\n');
    }
    let path = dir.join(RECORDS);
    fs::write(&path, s).map_err(|e| CliError::io(path, e))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SummaryRow {
    pub count: usize,
    pub holds: usize,
    pub violated: usize,
    pub skipped: usize,
    pub degenerate: usize,
    pub sup_ratio: Option<f64>,
}

pub fn summarize(records: &[CheckRecord]) -> BTreeMap<String, SummaryRow> {
    let mut rows: BTreeMap<String, SummaryRow> = BTreeMap::new();
    for r in records {
        let row = rows.entry(r.check_id.clone()).or_default();
        row.count += 1;
        match r.status {
            Status::Holds => row.holds += 1,
            Status::Violated => row.violated += 1,
            Status::SkippedPrecondition => row.skipped += 1,
            Status::Degenerate => row.degenerate += 1,
        }
        if matches!(r.status, Status::Holds | Status::Violated) {
            if let Some(x) = r.ratio {
                row.sup_ratio = Some(row.sup_ratio.map_or(x, |s| s.max(x)));
            }
        }
    }
    rows
}

pub fn write_summary(dir: &Path, rows: &BTreeMap<String, SummaryRow>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join(SUMMARY))?;
    w.write_record(["check_id", "count", "holds", "violated", "skipped", "degenerate", "sup_ratio"])?;
    for (id, r) in rows {
        w.write_record([
            id.clone(),
            r.count.to_string(),
            r.holds.to_string(),
            r.violated.to_string(),
            r.skipped.to_string(),
            r.degenerate.to_string(),
            real(r.sup_ratio),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(dir.join(SUMMARY), e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantRow {
    pub check_id: String,
    pub ensemble: String,
    pub n: usize,
    pub count: usize,
    pub sup_ratio: Option<f64>,
    pub witness: String,
    /// Name and value of the constant plugged in for re-verification.
    pub constant: Option<(String, f64)>,
    pub violations: usize,
    pub status: &'static str,
}

pub fn write_constants(dir: &Path, rows: &[ConstantRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join(CONSTANTS))?;
    w.write_record([
        "check_id",
        "ensemble",
        "n",
        "count",
        "sup_ratio",
        "witness",
        "constant",
        "constant_value",
        "violations_at_constant",
        "status",
    ])?;
    for r in rows {
        let (cname, cval) = match &r.constant {
            Some((k, v)) => (k.clone(), real(Some(*v))),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.check_id.clone(),
            r.ensemble.clone(),
            r.n.to_string(),
            r.count.to_string(),
            real(r.sup_ratio),
            r.witness.clone(),
            cname,
            cval,
            r.violations.to_string(),
            r.status.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(dir.join(CONSTANTS), e))
}
