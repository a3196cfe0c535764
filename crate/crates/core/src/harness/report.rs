//! Run reports and their JSON/CSV emission.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    /// Set when the fold was aborted by a non-finite loss; such folds are
    /// recorded as failed, not as zero accuracy.
    pub diverged_at_epoch: Option<usize>,
    pub true_detection_rate: Option<f64>,
    /// confusion[truth][predicted]; empty for diverged folds.
    pub confusion: Vec<Vec<u32>>,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub per_fold: Vec<FoldReport>,
    /// Mean true detection rate over completed folds.
    pub mean_tdr: Option<f64>,
    /// Population standard deviation over completed folds.
    pub std_tdr: Option<f64>,
    /// Digest of architecture + optimizer + budget + seed + fold count
    /// (input mode excluded, so protocol parity is checkable).
    pub config_digest: String,
    pub seed: u64,
    pub input_mode: String,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// Field-for-field equality ignoring wall-clock time, which is the one
    /// inherently non-deterministic field.
    pub fn eq_modulo_wall_clock(&self, other: &RunReport) -> bool {
        self.per_fold == other.per_fold
            && self.mean_tdr == other.mean_tdr
            && self.std_tdr == other.std_tdr
            && self.config_digest == other.config_digest
            && self.seed == other.seed
            && self.input_mode == other.input_mode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub label: String,
    /// True when the ablated spec equals the baseline spec, in which case
    /// the baseline report is reused instead of re-running.
    pub duplicate_of_baseline: bool,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub entries: Vec<AblationEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(HarnessError::Usage(format!(
                "unknown report format '{other}' (expected json or csv)"
            ))),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "diverged".to_string(),
    }
}

/// Emit a report: JSON as a single document, CSV as one row per fold plus
/// an aggregate row. Returns the byte count written.
pub fn emit_report<W: Write>(report: &RunReport, format: ReportFormat, mut sink: W) -> Result<u64> {
    let bytes = match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report)?;
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => {
            let mut out = String::from("fold,true_detection_rate\n");
            for fold in &report.per_fold {
                out.push_str(&format!(
                    "{},{}\n",
                    fold.fold,
                    fmt_opt(fold.true_detection_rate)
                ));
            }
            out.push_str(&format!("aggregate,{}\n", fmt_opt(report.mean_tdr)));
            out.into_bytes()
        }
    };
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len() as u64)
}

/// Emit an ablation table: JSON as a single document, CSV as one summary
/// row per entry.
pub fn emit_ablation_table<W: Write>(
    table: &AblationTable,
    format: ReportFormat,
    mut sink: W,
) -> Result<u64> {
    let bytes = match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(table)?;
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => {
            let mut out = String::from("label,mean_tdr,std_tdr,duplicate_of_baseline\n");
            for entry in &table.entries {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    entry.label,
                    fmt_opt(entry.report.mean_tdr),
                    fmt_opt(entry.report.std_tdr),
                    entry.duplicate_of_baseline
                ));
            }
            out.into_bytes()
        }
    };
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len() as u64)
}

/// Parse a JSON report back.
pub fn parse_report(text: &str) -> Result<RunReport> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_report<R: std::io::Read>(mut source: R) -> Result<RunReport> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    parse_report(&text)
}
