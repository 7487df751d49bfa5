//! Runs, metrics, reports, tuning export and the ablation matrix.

mod ablation;
mod config;
mod export;
mod metrics;
mod report;
mod runner;

pub use ablation::{
    ablation_matrix, run_ablation, AblationReport, AblationRow, AblationVariant, PARTIAL_SWAP_PROBABILITY,
};
pub use config::{apply_override, RunConfig, RunMode, TemplateOptions, CACHE_DIR_ENV};
pub use export::{pairs_body, read_tuning_set, tuning_recipe, ExportSummary, SkippedRecord, TuningPair};
pub use metrics::{compute_metrics, da_accuracy, mc_accuracy, normalize_direct_answer, McRow, Metrics};
pub use report::{
    format_accuracy, markdown_row, read_report, render, render_markdown, write_run_dir, InstanceTrace, ReportFormat,
    RowStatus, RunReport, Timing, TraceError,
};
pub use runner::{Harness, RunOutcome};
