use std::path::Path;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::runner::Harness;
use crate::digest::Digest;
use crate::error::Result;
use crate::promptkit::Phase;
use crate::types::{InstanceRecord, Split};

/// One (prompt, target) pair for instruction tuning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningPair {
    pub id: String,
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub count: usize,
    pub skipped: Vec<SkippedRecord>,
    /// Digest over the pair lines only, without the metadata header.
    pub pairs_digest: Digest,
}

/// Recipe recorded in the export header for the downstream trainer.
pub fn tuning_recipe() -> serde_json::Value {
    json!({
        "objective": "cross-entropy on target tokens",
        "teacher_forcing": true,
        "decoding": "greedy",
        "optimizer": "adafactor",
        "learning_rate": 1e-4,
        "batch_size": 16,
        "epochs": 1,
    })
}

impl Harness {
    /// Build zero-shot tuning pairs over the train split, using the
    /// tuning-phase perturbation. Records without a gold answer, or whose
    /// backends fail, are listed as skipped.
    pub async fn tuning_pairs(&self) -> (Vec<TuningPair>, Vec<SkippedRecord>) {
        let train = self.dataset().split(Split::Train);
        let results: Vec<std::result::Result<TuningPair, SkippedRecord>> = stream::iter(train)
            .map(|rec| self.tuning_pair(rec))
            .buffered(self.config().fanout_width)
            .collect()
            .await;
        let mut pairs = Vec::new();
        let mut skipped = Vec::new();
        for r in results {
            match r {
                Ok(p) => pairs.push(p),
                Err(s) => skipped.push(s),
            }
        }
        (pairs, skipped)
    }

    async fn tuning_pair(&self, rec: &InstanceRecord) -> std::result::Result<TuningPair, SkippedRecord> {
        let skip = |reason: String| SkippedRecord {
            id: rec.id.clone(),
            reason,
        };
        let target = rec.gold_text().ok_or_else(|| skip("no gold answer".into()))?;
        let built = async {
            let outputs = self.expert_outputs(rec, Phase::Tune).await?;
            self.prompt_for(rec, &outputs, Phase::Tune, 0).await
        };
        let (prompt, _) = built.await.map_err(|e| skip(e.to_string()))?;
        Ok(TuningPair {
            id: rec.id.clone(),
            input: prompt.into_string(),
            target,
        })
    }

    /// Write the tuning set as JSONL: a `#meta` header line, then one pair
    /// per line in train-split order.
    pub async fn export_tuning_set(&self, out: &Path) -> Result<ExportSummary> {
        let (pairs, skipped) = self.tuning_pairs().await;
        let body = pairs_body(&pairs);
        let meta = json!({
            "#meta": {
                "config_fingerprint": self.fingerprint(),
                "dataset": self.config().dataset.name.to_string(),
                "family": self.config().dataset.family,
                "panel": self.config().effective_panel(Phase::Tune),
                "perturbation": self.config().perturb,
                "count": pairs.len(),
                "skipped": skipped,
                "recipe": tuning_recipe(),
            }
        });
        if let Some(dir) = out.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(out, format!("{}\n{body}", serde_json::to_string(&meta)?))?;
        Ok(ExportSummary {
            count: pairs.len(),
            skipped,
            pairs_digest: Digest::of(body.as_bytes()),
        })
    }
}

/// The pair lines of an export, newline-terminated.
pub fn pairs_body(pairs: &[TuningPair]) -> String {
    let mut body = String::new();
    for p in pairs {
        body.push_str(&serde_json::to_string(p).expect("pair serializes"));
        body.push('\n');
    }
    body
}

/// Read back an export: the header and the pairs.
pub fn read_tuning_set(path: &Path) -> Result<(serde_json::Value, Vec<TuningPair>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let meta: serde_json::Value = serde_json::from_str(lines.next().unwrap_or("{}"))?;
    let pairs = lines
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<Vec<TuningPair>, _>>()?;
    Ok((meta, pairs))
}
