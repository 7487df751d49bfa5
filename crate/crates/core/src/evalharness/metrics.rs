use serde::{Deserialize, Serialize};

use super::report::{InstanceTrace, RowStatus};
use crate::error::{Error, Result};
use crate::text::normalize_text;

/// One multiple-choice outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McRow {
    pub pick: usize,
    pub gold: Option<usize>,
}

/// Fraction of rows whose pick is the gold choice.
pub fn mc_accuracy(rows: &[McRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::usage("mc_accuracy over zero rows"));
    }
    let mut correct = 0usize;
    for (i, r) in rows.iter().enumerate() {
        let gold = r
            .gold
            .ok_or_else(|| Error::usage(format!("row {i} has no gold choice")))?;
        if r.pick == gold {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Normalization for direct-answer matching: the usual rules plus one
/// leading article.
pub fn normalize_direct_answer(s: &str) -> String {
    let n = normalize_text(s).into_string();
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = n.strip_prefix(article) {
            return rest.to_string();
        }
    }
    n
}

/// Soft VQA score: min(matches / 3, 1), where matches counts annotator
/// answers equal to the prediction after normalization. An empty gold list
/// scores 0.
pub fn da_accuracy(completion: &str, gold_direct_answers: &[String]) -> f64 {
    let pred = normalize_direct_answer(completion);
    let matches = gold_direct_answers
        .iter()
        .filter(|g| normalize_direct_answer(g) == pred)
        .count();
    (matches as f64 / 3.0).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mc_accuracy: Option<f64>,
    pub da_accuracy: Option<f64>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub n_degenerate: usize,
}

/// Reduce traces to metrics, folding in dataset order. Reports store the
/// output of this function, so recomputing from their rows is exact.
pub fn compute_metrics(rows: &[InstanceTrace]) -> Metrics {
    let evaluated: Vec<&InstanceTrace> = rows.iter().filter(|r| r.status == RowStatus::Evaluated).collect();
    let mc_rows: Vec<McRow> = evaluated
        .iter()
        .filter_map(|r| {
            r.pick.as_ref().map(|p| McRow {
                pick: p.index,
                gold: r.gold_choice,
            })
        })
        .collect();
    let mc = if !mc_rows.is_empty() && mc_rows.iter().all(|r| r.gold.is_some()) {
        mc_accuracy(&mc_rows).ok()
    } else {
        None
    };
    let da_scores: Vec<f64> = evaluated.iter().filter_map(|r| r.da_score).collect();
    let da = if da_scores.is_empty() {
        None
    } else {
        Some(da_scores.iter().sum::<f64>() / da_scores.len() as f64)
    };
    Metrics {
        mc_accuracy: mc,
        da_accuracy: da,
        n_evaluated: evaluated.len(),
        n_skipped: rows.len() - evaluated.len(),
        n_degenerate: evaluated.iter().filter(|r| r.degenerate).count(),
    }
}
