//! Per-round metrics CSV and run-summary files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::run::{RunResult, RunSummary};
use super::ExperimentError;
use crate::federated::RoundOutcome;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const METRICS_HEADER: [&str; 8] =
    ["round", "time", "loss", "loss_gap", "deadline", "mean_ratio", "delivered", "objective"];

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("bad CSV header: {0}")]
    Header(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("time does not increase at round {round}")]
    TimeNotIncreasing { round: u64 },
    #[error("malformed summary: {0}")]
    Summary(String),
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub round: u64,
    /// Cumulative simulated seconds at the end of the round.
    pub time: f64,
    pub loss: f64,
    pub loss_gap: f64,
    /// Infinite for schemes that wait for every device.
    pub deadline: f64,
    pub mean_ratio: f64,
    pub delivered: usize,
    pub objective: f64,
}

impl From<&RoundOutcome> for MetricsRow {
    fn from(o: &RoundOutcome) -> Self {
        Self {
            round: o.round,
            time: o.cumulative_time,
            loss: o.loss,
            loss_gap: o.loss_gap,
            deadline: o.deadline_used,
            mean_ratio: o.plan.mean_ratio(),
            delivered: o.delivered.len(),
            objective: o.plan.objective_value,
        }
    }
}

pub fn metrics_rows(result: &RunResult) -> Vec<MetricsRow> {
    result.outcomes.iter().map(MetricsRow::from).collect()
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.time.to_string(),
            r.loss.to_string(),
            r.loss_gap.to_string(),
            r.deadline.to_string(),
            r.mean_ratio.to_string(),
            r.delivered.to_string(),
            r.objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a metrics CSV written by [`write_metrics`]. The header must match
/// exactly, every row must have eight fields and time must strictly
/// increase.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>, ReportError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(ReportError::Header(e.to_string())),
        None => return Err(ReportError::Header("empty file".into())),
    };
    if header.iter().ne(METRICS_HEADER) {
        return Err(ReportError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| ReportError::Row { line: e.position().map_or(0, |p| p.line()), reason: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| ReportError::Row { line, reason };
        if rec.len() != METRICS_HEADER.len() {
            return Err(bad(format!("{} fields", rec.len())));
        }
        let float = |i: usize| -> Result<f64, ReportError> {
            rec[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", METRICS_HEADER[i])))
        };
        let row = MetricsRow {
            round: rec[0].parse().map_err(|e| bad(format!("round: {e}")))?,
            time: float(1)?,
            loss: float(2)?,
            loss_gap: float(3)?,
            deadline: float(4)?,
            mean_ratio: float(5)?,
            delivered: rec[6].parse().map_err(|e| bad(format!("delivered: {e}")))?,
            objective: float(7)?,
        };
        if rows.last().is_some_and(|prev| !(row.time > prev.time)) {
            return Err(ReportError::TimeNotIncreasing { round: row.round });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn summary_to_toml(summary: &RunSummary) -> String {
    toml::to_string(summary).expect("summary is always representable as TOML")
}

pub fn parse_summary(text: &str) -> Result<RunSummary, ReportError> {
    toml::from_str(text).map_err(|e| ReportError::Summary(e.to_string()))
}

/// Writes `metrics.csv` and `summary.toml` into `dir`, creating it if needed.
pub fn emit_report(dir: &Path, result: &RunResult) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut buf = Vec::new();
    write_metrics(&metrics_rows(result), &mut buf).map_err(|e| ExperimentError::Io {
        path: metrics_path.clone(),
        source: e.into(),
    })?;
    fs::write(&metrics_path, buf).map_err(io(&metrics_path))?;
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, summary_to_toml(&result.summary)).map_err(io(&summary_path))?;
    Ok((metrics_path, summary_path))
}
