//! Report persistence: CSV with a fixed column order and JSON with the
//! documented `{config, records}` schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::MetricRecord;

/// Configuration echo stored with every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub experiment: String,
    pub estimators: Vec<String>,
    pub replications: usize,
    pub seed: u64,
    pub n_e: usize,
    pub n_o: usize,
    pub n_e_grid: Vec<usize>,
    pub n_o_grid: Vec<usize>,
    pub rates_grid: Vec<usize>,
    pub nuisance: String,
    pub stage2: String,
    pub fast: bool,
}

/// Replication-level records plus the configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ReportConfig,
    pub records: Vec<MetricRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

// Wall time stays out of the CSV so re-running a configuration reproduces
// identical bytes; the JSON report carries it.
const CSV_HEADER: &str = "estimator,preset,n_e,n_o,seed,pehe,ate_error";

fn quote_field(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

impl ExperimentReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                quote_field(&r.estimator),
                quote_field(&r.preset),
                r.n_e,
                r.n_o,
                r.seed,
                r.pehe,
                r.ate_error
            ));
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Writes a non-empty report; the CSV column order is fixed and re-running
/// the same configuration reproduces identical bytes.
pub fn write_report(
    report: &ExperimentReport,
    path: &Path,
    format: ReportFormat,
) -> Result<(), HarnessError> {
    if report.records.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let text = match format {
        ReportFormat::Csv => report.to_csv_string(),
        ReportFormat::Json => report.to_json_string()?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Splits one CSV line honoring double-quoted fields.
fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                current.push('"');
                chars.next();
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut current));
            }
            other => current.push(other),
        }
    }
    fields.push(current);
    fields
}

/// Reads the records back from a report CSV.
pub fn read_report_csv(path: &Path) -> Result<Vec<MetricRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != CSV_HEADER {
        return Err(HarnessError::BadConfig(format!(
            "unexpected report header `{header}`"
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 7 {
            return Err(HarnessError::BadConfig(format!(
                "report row {} has {} fields, expected 7",
                i + 1,
                fields.len()
            )));
        }
        let parse_err = |what: &str| HarnessError::BadConfig(format!("report row {}: bad {what}", i + 1));
        records.push(MetricRecord {
            estimator: fields[0].clone(),
            preset: fields[1].clone(),
            n_e: fields[2].parse().map_err(|_| parse_err("n_e"))?,
            n_o: fields[3].parse().map_err(|_| parse_err("n_o"))?,
            seed: fields[4].parse().map_err(|_| parse_err("seed"))?,
            pehe: fields[5].parse().map_err(|_| parse_err("pehe"))?,
            ate_error: fields[6].parse().map_err(|_| parse_err("ate_error"))?,
            wall_ms: 0,
        });
    }
    Ok(records)
}

/// Reads a JSON report back.
pub fn read_report_json(path: &Path) -> Result<ExperimentReport, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> ExperimentReport {
        ExperimentReport {
            config: ReportConfig {
                experiment: "misspec".into(),
                estimators: vec!["mr".into()],
                replications: 1,
                seed: 7,
                n_e: 100,
                n_o: 150,
                n_e_grid: vec![],
                n_o_grid: vec![],
                rates_grid: vec![],
                nuisance: "parametric-per-preset".into(),
                stage2: "poly2".into(),
                fast: true,
            },
            records: vec![
                MetricRecord {
                    estimator: "mr".into(),
                    preset: "M_{1',2',3,4'}".into(),
                    n_e: 100,
                    n_o: 150,
                    seed: 7,
                    pehe: 0.25,
                    ate_error: 0.125,
                    wall_ms: 12,
                },
                MetricRecord {
                    estimator: "mr".into(),
                    preset: "M_{1,2,3,4}".into(),
                    n_e: 100,
                    n_o: 150,
                    seed: 8,
                    pehe: 0.5,
                    ate_error: 0.0625,
                    wall_ms: 9,
                },
            ],
        }
    }

    #[test]
    fn csv_round_trips_quoted_presets() {
        let report = sample_report();
        let dir = std::env::temp_dir().join(format!("hlce_report_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("report.csv");
        write_report(&report, &path, ReportFormat::Csv).unwrap();
        let back = read_report_csv(&path).unwrap();
        // equal up to wall time, which lives only in the JSON report
        let mut expected = report.records.clone();
        for r in &mut expected {
            r.wall_ms = 0;
        }
        assert_eq!(back, expected);
        // identical bytes when rewritten
        let text = std::fs::read_to_string(&path).unwrap();
        let again = ExperimentReport { records: back, ..report.clone() };
        assert_eq!(text, again.to_csv_string());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn json_matches_documented_schema() {
        let report = sample_report();
        let json = report.to_json_string().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value.get("config").is_some());
        let records = value.get("records").unwrap().as_array().unwrap();
        for field in ["estimator", "preset", "n_e", "n_o", "seed", "pehe", "ate_error", "wall_ms"] {
            assert!(records[0].get(field).is_some(), "missing field {field}");
        }
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn empty_report_is_rejected() {
        let mut report = sample_report();
        report.records.clear();
        let path = std::env::temp_dir().join("hlce_empty_report.csv");
        assert!(matches!(
            write_report(&report, &path, ReportFormat::Csv),
            Err(HarnessError::EmptyReport)
        ));
    }
}
