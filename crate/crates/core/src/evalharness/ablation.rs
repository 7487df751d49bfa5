use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RunMode};
use super::export::{pairs_body, ExportSummary};
use super::report::{format_accuracy, write_run_dir, RunReport};
use super::runner::Harness;
use crate::datasets::{ingest, Dataset};
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::promptkit::{PerturbationSpec, PhaseScope};
use crate::types::Split;

/// Probability used by the partial label-swap rows.
pub const PARTIAL_SWAP_PROBABILITY: f64 = 0.5;

/// One row of the ablation matrix: a label and the config it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    /// `baseline`, then `#1` to `#7`.
    pub label: String,
    pub slug: String,
    pub description: String,
    pub config: RunConfig,
}

/// The eight configurations compared by `ablate`, derived from `base`.
/// Every row runs the coordinator; the panel must have exactly two experts.
pub fn ablation_matrix(base: &RunConfig) -> Result<Vec<AblationVariant>> {
    if base.panel.len() != 2 {
        return Err(Error::usage(format!(
            "the ablation matrix needs a panel of exactly two experts; got {}",
            base.panel.len()
        )));
    }
    let (p0, p1) = (base.panel[0].name.clone(), base.panel[1].name.clone());
    let mut root = base.clone();
    root.mode = RunMode::ColaZero {
        k: base.mode.shots().unwrap_or(0),
    };
    root.perturb = PerturbationSpec::none();
    root.template.include_captions = true;
    root.template.include_answers = true;

    let seed = base.seed;
    let with_perturb = |p: PerturbationSpec| {
        let mut c = root.clone();
        c.perturb = p;
        c
    };
    let mut no_captions = root.clone();
    no_captions.template.include_captions = false;
    let mut no_answers = root.clone();
    no_answers.template.include_answers = false;

    let rows = vec![
        (
            "baseline",
            "baseline".to_string(),
            "both experts, unperturbed".to_string(),
            root.clone(),
        ),
        (
            "#1",
            format!("only-{p0}"),
            format!("only {p0}"),
            with_perturb(PerturbationSpec::single_expert(&p0)),
        ),
        (
            "#2",
            format!("only-{p1}"),
            format!("only {p1}"),
            with_perturb(PerturbationSpec::single_expert(&p1)),
        ),
        ("#3", "no-captions".into(), "captions removed".into(), no_captions),
        (
            "#4",
            "no-answers".into(),
            "plausible answers removed".into(),
            no_answers,
        ),
        (
            "#5",
            "swap-captions".into(),
            "caption labels swapped with p=0.5".into(),
            with_perturb(PerturbationSpec::swap_captions(PARTIAL_SWAP_PROBABILITY, seed)),
        ),
        (
            "#6",
            "swap-answers".into(),
            "answer labels swapped with p=0.5".into(),
            with_perturb(PerturbationSpec::swap_answers(PARTIAL_SWAP_PROBABILITY, seed)),
        ),
        (
            "#7",
            "swap-answers-eval".into(),
            "answer labels swapped at evaluation only".into(),
            with_perturb(PerturbationSpec::swap_answers(1.0, seed).with_phases(PhaseScope::EvalOnly)),
        ),
    ];
    let variants: Vec<AblationVariant> = rows
        .into_iter()
        .map(|(label, slug, description, config)| AblationVariant {
            label: label.to_string(),
            slug,
            description,
            config,
        })
        .collect();
    for v in &variants {
        v.config.validate()?;
    }
    Ok(variants)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub description: String,
    pub config_fingerprint: Digest,
    pub accuracy: Option<f64>,
    pub eval_prompt_digest: Digest,
    /// Present when the dataset has a train split.
    pub tuning: Option<ExportSummary>,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Comparison table. Digests are shortened; equal digests mean the
    /// row's prompts (or tuning pairs) are byte-identical.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| row | variant | accuracy | evaluated | eval prompts | tuning pairs |\n|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            let tuning = r
                .tuning
                .as_ref()
                .map(|t| format!("{} ({})", t.pairs_digest.short(), t.count))
                .unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                r.label,
                r.description,
                format_accuracy(r.accuracy),
                r.report.metrics.n_evaluated,
                r.eval_prompt_digest.short(),
                tuning
            );
        }
        s
    }
}

/// Run every ablation row: a tuning export (when a train split exists) and
/// an evaluation. With `out_dir`, each row's artifacts are written to
/// `<out_dir>/<slug>/` and the table to `<out_dir>/ablation.md`.
pub async fn run_ablation(base: &RunConfig, out_dir: Option<&Path>) -> Result<AblationReport> {
    let variants = ablation_matrix(base)?;
    let dataset: Dataset = ingest(&base.dataset)?;
    let has_train = !dataset.split(Split::Train).is_empty();
    let mut rows = Vec::with_capacity(variants.len());
    for (i, v) in variants.into_iter().enumerate() {
        let harness = Harness::with_dataset(v.config, dataset.clone())?;
        if i == 0 {
            harness.check_health().await?;
        }
        let tuning = if !has_train {
            None
        } else if let Some(dir) = out_dir {
            Some(
                harness
                    .export_tuning_set(&dir.join(&v.slug).join("tuning.jsonl"))
                    .await?,
            )
        } else {
            let (pairs, skipped) = harness.tuning_pairs().await;
            Some(ExportSummary {
                count: pairs.len(),
                skipped,
                pairs_digest: Digest::of(pairs_body(&pairs).as_bytes()),
            })
        };
        let outcome = harness.run().await?;
        if let Some(dir) = out_dir {
            write_run_dir(&dir.join(&v.slug), &outcome.report, &outcome.timing)?;
        }
        tracing::info!(row = %v.label, accuracy = ?outcome.report.accuracy(), "ablation row done");
        rows.push(AblationRow {
            label: v.label,
            description: v.description,
            config_fingerprint: harness.fingerprint(),
            accuracy: outcome.report.accuracy(),
            eval_prompt_digest: outcome.report.prompt_digest(),
            tuning,
            report: outcome.report,
        });
    }
    let report = AblationReport { rows };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ablation.md"), report.to_markdown())?;
        std::fs::write(dir.join("ablation.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptkit::PerturbationMode;

    const BASE: &str = r#"{
        "dataset": {"name": "custom", "family": "VQA_MC", "paths": {"val": "v.jsonl", "train": "t.jsonl"}},
        "panel": [
            {"name": "OFA", "base_url": "http://127.0.0.1:1/OFA", "role": "expert"},
            {"name": "BLIP", "base_url": "http://127.0.0.1:1/BLIP", "role": "expert"}
        ],
        "coordinator": {"name": "c", "base_url": "http://127.0.0.1:1", "role": "coordinator"},
        "mode": "ensemble_vote",
        "seed": 3
    }"#;

    #[test]
    fn matrix_has_eight_distinct_rows() {
        let base = RunConfig::from_json_str(BASE, &[]).unwrap();
        let m = ablation_matrix(&base).unwrap();
        let labels: Vec<&str> = m.iter().map(|v| v.label.as_str()).collect();
        assert_eq!(labels, ["baseline", "#1", "#2", "#3", "#4", "#5", "#6", "#7"]);
        let mut fps: Vec<Digest> = m.iter().map(|v| v.config.fingerprint()).collect();
        fps.sort_by_key(|d| d.hex());
        fps.dedup();
        assert_eq!(fps.len(), 8);
        assert!(m.iter().all(|v| v.config.mode == RunMode::ColaZero { k: 0 }));
        assert_eq!(m[1].config.perturb.mode, PerturbationMode::SingleExpert("OFA".into()));
        assert_eq!(m[7].config.perturb.probability, 1.0);
        assert_eq!(m[7].config.perturb.phases, PhaseScope::EvalOnly);
        assert!(!m[3].config.template.include_captions);
    }

    #[test]
    fn matrix_needs_two_experts() {
        let mut base = RunConfig::from_json_str(BASE, &[]).unwrap();
        base.panel.pop();
        assert!(matches!(ablation_matrix(&base), Err(Error::Usage(_))));
    }
}
