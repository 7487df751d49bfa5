use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::mapping::ChoicePick;
use crate::promptkit::PerturbationSpec;
use crate::types::{ExpertOutput, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Evaluated,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for TraceError {
    fn from(e: &Error) -> Self {
        TraceError {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

/// Everything one instance went through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTrace {
    pub id: String,
    pub status: RowStatus,
    /// Outputs as they entered the prompt, after perturbation.
    pub expert_outputs: Vec<ExpertOutput>,
    pub exemplar_ids: Vec<String>,
    pub prompt_fingerprint: Option<Digest>,
    /// Raw coordinator text (cola modes only).
    pub completion: Option<String>,
    /// Free-text answer the row is judged on.
    pub prediction: Option<String>,
    pub pick: Option<ChoicePick>,
    pub gold_choice: Option<usize>,
    pub gold_text: Option<String>,
    pub correct: Option<bool>,
    pub da_score: Option<f64>,
    pub degenerate: bool,
    pub errors: Vec<TraceError>,
}

impl InstanceTrace {
    /// A row not yet evaluated, with no errors.
    pub fn pending(id: &str, gold_choice: Option<usize>, gold_text: Option<String>) -> Self {
        InstanceTrace {
            id: id.to_string(),
            status: RowStatus::Skipped,
            expert_outputs: Vec::new(),
            exemplar_ids: Vec::new(),
            prompt_fingerprint: None,
            completion: None,
            prediction: None,
            pick: None,
            gold_choice,
            gold_text,
            correct: None,
            da_score: None,
            degenerate: false,
            errors: Vec::new(),
        }
    }

    pub fn skipped(id: &str, gold_choice: Option<usize>, gold_text: Option<String>, err: &Error) -> Self {
        let mut t = Self::pending(id, gold_choice, gold_text);
        t.errors.push(err.into());
        t
    }
}

/// Output of one evaluation run. Contains no timings, so identical inputs
/// give byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_fingerprint: Digest,
    pub dataset: String,
    pub family: String,
    pub split: Split,
    pub mode: String,
    pub panel: Vec<String>,
    pub k: Option<usize>,
    pub perturbation: PerturbationSpec,
    pub per_instance: Vec<InstanceTrace>,
    pub metrics: Metrics,
}

impl RunReport {
    /// Headline accuracy: multiple-choice when available, else direct-answer.
    pub fn accuracy(&self) -> Option<f64> {
        self.metrics.mc_accuracy.or(self.metrics.da_accuracy)
    }

    /// Digest over the prompt fingerprints of every row, in order.
    pub fn prompt_digest(&self) -> Digest {
        let parts: Vec<String> = self
            .per_instance
            .iter()
            .map(|t| t.prompt_fingerprint.map(|d| d.hex()).unwrap_or_default())
            .collect();
        Digest::of_parts(parts.iter().map(String::as_bytes))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Wall-clock data kept out of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_ms: u128,
    pub instances: usize,
    pub transport_calls: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::usage(format!("unknown format `{s}` (json | markdown)"))),
        }
    }
}

pub fn format_accuracy(a: Option<f64>) -> String {
    match a {
        Some(a) => format!("{:.1}", a * 100.0),
        None => "n/a".to_string(),
    }
}

pub const TABLE_HEADER: &str = "| dataset | split | mode | panel | accuracy | evaluated | skipped | degenerate |\n|---|---|---|---|---|---|---|---|\n";

pub fn markdown_row(r: &RunReport) -> String {
    let degenerate = if r.metrics.n_degenerate > 0 {
        format!("{}[^degenerate]", r.metrics.n_degenerate)
    } else {
        "0".to_string()
    };
    format!(
        "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
        r.dataset,
        r.split,
        r.mode,
        r.panel.join(", "),
        format_accuracy(r.accuracy()),
        r.metrics.n_evaluated,
        r.metrics.n_skipped,
        degenerate
    )
}

/// Markdown table (accuracy as a percentage, one decimal) with footnotes
/// for degenerate rows.
pub fn render_markdown(reports: &[&RunReport]) -> String {
    let mut s = String::from(TABLE_HEADER);
    for r in reports {
        s.push_str(&markdown_row(r));
    }
    let degenerate: usize = reports.iter().map(|r| r.metrics.n_degenerate).sum();
    if degenerate > 0 {
        let _ = write!(
            s,
            "\n[^degenerate]: rows whose answer normalized to nothing; they are scored as picking the first choice.\n"
        );
    }
    s
}

pub fn render(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Markdown => render_markdown(&[report]),
    }
}

/// Write `report.json`, `report.md` and `timing.json` under `dir`.
pub fn write_run_dir(dir: &Path, report: &RunReport, timing: &Timing) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report.to_json())?;
    std::fs::write(dir.join("report.md"), render_markdown(&[report]))?;
    std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(timing)? + "\n")?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::usage(format!("cannot read report {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::usage(format!("{} is not a run report: {e}", path.display())))
}
