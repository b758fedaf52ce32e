use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diagnostics::BoundRecord;
use crate::harness::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
    Error,
}

/// One named check. `records` holds the summary records; for checks that
/// evaluate many points it is the worst record of each kind, and
/// `evaluations` counts every record that was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub status: CheckStatus,
    pub evaluations: usize,
    pub records: Vec<BoundRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl CheckEntry {
    pub fn from_records(name: &str, evaluations: usize, records: Vec<BoundRecord>) -> Self {
        let status = if records.iter().all(|r| r.holds) {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name: name.to_string(),
            status,
            evaluations,
            records,
            detail: None,
            elapsed_ms: None,
        }
    }

    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::Skipped,
            evaluations: 0,
            records: Vec::new(),
            detail: Some(reason.into()),
            elapsed_ms: None,
        }
    }

    pub fn error(name: &str, err: &crate::Error) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::Error,
            evaluations: 0,
            records: Vec::new(),
            detail: Some(format!("{err:?}: {err}")),
            elapsed_ms: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub entries: Vec<CheckEntry>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn new(config: ExperimentConfig, entries: Vec<CheckEntry>) -> Self {
        let overall_pass = entries.iter().all(CheckEntry::passed);
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            entries,
            overall_pass,
        }
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Text,
}

pub fn emit_report(report: &VerificationReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report is always serializable");
            out.push(b'\n');
            out
        }
        ReportFormat::Text => text_table(report).into_bytes(),
    }
}

fn text_table(report: &VerificationReport) -> String {
    let mut s = String::new();
    let name_width = report.entries.iter().map(|e| e.name.len()).max().unwrap_or(5).max(5);
    for e in &report.entries {
        let verdict = if e.passed() { "PASS" } else { "FAIL" };
        let _ = write!(s, "{verdict}  {:<name_width$}  n={:<4}", e.name, e.evaluations);
        match e.status {
            CheckStatus::Skipped | CheckStatus::Error => {
                let tag = if e.status == CheckStatus::Skipped { "skipped" } else { "error" };
                let _ = write!(s, "  {tag}: {}", e.detail.as_deref().unwrap_or(""));
            }
            _ => {
                if let Some(worst) = worst_record(&e.records) {
                    let _ = write!(
                        s,
                        "  worst {}: lhs={:.6e} rhs={:.6e} slack={:.3e}",
                        worst.name, worst.lhs, worst.rhs, worst.slack
                    );
                }
            }
        }
        if let Some(ms) = e.elapsed_ms {
            let _ = write!(s, "  ({ms:.1} ms)");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "overall: {}", if report.overall_pass { "PASS" } else { "FAIL" });
    s
}

/// Record with the least slack relative to its tolerance.
fn worst_record(records: &[BoundRecord]) -> Option<&BoundRecord> {
    records.iter().min_by(|a, b| margin(a).total_cmp(&margin(b)))
}

fn margin(r: &BoundRecord) -> f64 {
    match r.kind {
        crate::diagnostics::BoundKind::Inequality => r.slack + r.tolerance,
        crate::diagnostics::BoundKind::Identity => r.tolerance - r.slack.abs(),
    }
}
