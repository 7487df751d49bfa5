use std::sync::Arc;
use std::time::Instant;

use futures::future::join_all;
use futures::stream::{self, StreamExt};
use tokio::sync::Semaphore;

use super::config::{RunConfig, RunMode};
use super::metrics::{compute_metrics, da_accuracy, normalize_direct_answer};
use super::report::{InstanceTrace, RowStatus, RunReport, Timing};
use crate::backends::{BackendClient, BackendHandle, ResponseCache};
use crate::datasets::{ingest, Dataset};
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::mapping::{ensemble_average, majority_vote, map_to_choice, plurality, ChoicePick, MappedAnswer};
use crate::promptkit::{
    apply_perturbation, build_prompt, derive_seed, sample_exemplars, transform_question, Exemplar, Phase,
    PromptTemplate, PromptText,
};
use crate::types::{ExpertOutput, InstanceRecord, Split};

/// A configured run: validated config, loaded dataset and backend clients
/// sharing one cache and one concurrency budget.
#[derive(Debug)]
pub struct Harness {
    config: RunConfig,
    fingerprint: Digest,
    dataset: Dataset,
    experts: Vec<BackendClient>,
    coordinator: Option<BackendClient>,
    embedder: BackendClient,
}

/// Await all futures, then report the first failure in input order, so the
/// recorded error does not depend on which request finished first.
async fn in_order<T>(futs: impl IntoIterator<Item = impl std::future::Future<Output = Result<T>>>) -> Result<Vec<T>> {
    join_all(futs).await.into_iter().collect()
}

/// What one instance produced before scoring.
struct Decision {
    prediction: String,
    pick: Option<ChoicePick>,
    completion: Option<String>,
    degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timing: Timing,
}

impl Harness {
    /// Validate the config, then load and validate the dataset. Nothing
    /// touches the network.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let dataset = ingest(&config.dataset)?;
        Self::with_dataset(config, dataset)
    }

    pub fn with_dataset(config: RunConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.family != config.dataset.family {
            return Err(Error::usage(format!(
                "dataset family {} does not match config family {}",
                dataset.family, config.dataset.family
            )));
        }
        let cache = Arc::new(ResponseCache::open(config.resolved_cache_dir())?);
        let limiter = Arc::new(Semaphore::new(config.fanout_width));
        let client = |h: &BackendHandle| -> Result<BackendClient> {
            Ok(BackendClient::new(h.clone())?
                .with_cache(cache.clone())
                .with_limiter(limiter.clone()))
        };
        let experts = config.panel.iter().map(client).collect::<Result<Vec<_>>>()?;
        let coordinator = config.coordinator.as_ref().map(client).transpose()?;
        let embedder = client(&config.embedder)?;
        Ok(Harness {
            fingerprint: config.fingerprint(),
            config,
            dataset,
            experts,
            coordinator,
            embedder,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn fingerprint(&self) -> Digest {
        self.fingerprint
    }

    /// HTTP attempts across all clients.
    pub fn transport_calls(&self) -> u64 {
        self.clients().map(BackendClient::transport_calls).sum()
    }

    pub fn cache_hits(&self) -> u64 {
        self.clients().map(BackendClient::cache_hits).sum()
    }

    fn clients(&self) -> impl Iterator<Item = &BackendClient> {
        self.experts
            .iter()
            .chain(self.coordinator.as_ref())
            .chain(Some(&self.embedder))
    }

    /// Check every backend the mode will call.
    pub async fn check_health(&self) -> Result<()> {
        let mut checks: Vec<&BackendClient> = self.active_experts(Phase::Eval);
        if self.config.mode.needs_coordinator() {
            checks.extend(self.coordinator.as_ref());
        }
        checks.push(&self.embedder);
        in_order(checks.into_iter().map(|c| c.health())).await?;
        Ok(())
    }

    pub(crate) fn active_experts(&self, phase: Phase) -> Vec<&BackendClient> {
        let names = self.config.effective_panel(phase);
        self.experts
            .iter()
            .filter(|c| names.iter().any(|n| n == c.name()))
            .collect()
    }

    /// Records of the evaluation split, after `limit`.
    pub fn eval_records(&self) -> &[InstanceRecord] {
        let all = self.dataset.split(self.config.eval_split);
        &all[..self.config.limit.unwrap_or(all.len()).min(all.len())]
    }

    /// Caption and plausible answer from each expert active in `phase`, in
    /// panel order, with the phase's perturbation applied.
    pub(crate) async fn expert_outputs(&self, rec: &InstanceRecord, phase: Phase) -> Result<Vec<ExpertOutput>> {
        let query = transform_question(rec.family, &rec.question);
        let outputs = in_order(self.active_experts(phase).into_iter().map(|c| {
            let query = &query;
            async move {
                let (caption, answer) = futures::join!(c.caption(&rec.image), c.plausible_answer(&rec.image, query));
                Ok::<_, Error>(ExpertOutput::new(c.name(), caption?, answer?))
            }
        }))
        .await?;
        apply_perturbation(&outputs, &self.config.perturb, phase, &rec.id)
    }

    pub(crate) fn template(&self, phase: Phase) -> PromptTemplate {
        self.config.template_for(phase)
    }

    /// Zero-shot or k-shot coordinator prompt for `rec`.
    pub(crate) async fn prompt_for(
        &self,
        rec: &InstanceRecord,
        outputs: &[ExpertOutput],
        phase: Phase,
        k: usize,
    ) -> Result<(PromptText, Vec<String>)> {
        let mut exemplars = Vec::with_capacity(k);
        if k > 0 {
            let seed = derive_seed(self.config.seed, "exemplars", &rec.id);
            let drawn = sample_exemplars(self.dataset.split(Split::Train), k, seed, &rec.id)?;
            let fetched = in_order(drawn.iter().map(|ex| self.expert_outputs(ex, phase))).await?;
            for (ex, outs) in drawn.into_iter().zip(fetched) {
                exemplars.push(Exemplar::new(ex, outs)?);
            }
        }
        let query = transform_question(rec.family, &rec.question);
        let prompt = build_prompt(&self.template(phase), outputs, &query, &rec.choices, &exemplars)?;
        Ok((prompt, exemplars.iter().map(|e| e.record.id.clone()).collect()))
    }

    /// Evaluate the configured split. Per-instance failures are recorded in
    /// the trace and the row is skipped; the run itself only fails on
    /// misconfiguration.
    pub async fn run(&self) -> Result<RunOutcome> {
        if self.config.mode == RunMode::ExportTuning {
            return Err(Error::usage(
                "mode export_tuning writes a tuning set; use export instead of run",
            ));
        }
        let started = Instant::now();
        let records = self.eval_records();
        let per_instance: Vec<InstanceTrace> = stream::iter(records)
            .map(|rec| self.run_instance(rec))
            .buffered(self.config.fanout_width)
            .collect()
            .await;
        let metrics = compute_metrics(&per_instance);
        let report = RunReport {
            config_fingerprint: self.fingerprint,
            dataset: self.config.dataset.name.to_string(),
            family: self.config.dataset.family.to_string(),
            split: self.config.eval_split,
            mode: self.config.mode.to_string(),
            panel: self.config.effective_panel(Phase::Eval),
            k: self.config.mode.shots(),
            perturbation: self.config.perturb.clone(),
            per_instance,
            metrics,
        };
        let timing = Timing {
            wall_ms: started.elapsed().as_millis(),
            instances: records.len(),
            transport_calls: self.transport_calls(),
            cache_hits: self.cache_hits(),
        };
        Ok(RunOutcome { report, timing })
    }

    async fn run_instance(&self, rec: &InstanceRecord) -> InstanceTrace {
        let gold_text = rec.gold_text();
        let outputs = match self.expert_outputs(rec, Phase::Eval).await {
            Ok(o) => o,
            Err(e) => {
                tracing::warn!(id = %rec.id, error = %e, "instance skipped");
                return InstanceTrace::skipped(&rec.id, rec.gold_choice, gold_text, &e);
            }
        };
        let mut trace = InstanceTrace::pending(&rec.id, rec.gold_choice, gold_text);
        trace.expert_outputs = outputs.clone();
        match self.decide(rec, &outputs, &mut trace).await {
            Ok(d) => {
                trace.status = RowStatus::Evaluated;
                trace.correct = match (&d.pick, rec.gold_choice) {
                    (Some(p), Some(g)) => Some(p.index == g),
                    _ => None,
                };
                if !rec.gold_direct_answers.is_empty() {
                    trace.da_score = Some(da_accuracy(&d.prediction, &rec.gold_direct_answers));
                }
                trace.prediction = Some(d.prediction);
                trace.pick = d.pick;
                trace.completion = d.completion;
                trace.degenerate = d.degenerate;
            }
            Err(e) => {
                tracing::warn!(id = %rec.id, error = %e, "instance skipped");
                trace.errors.push((&e).into());
            }
        }
        trace
    }

    async fn decide(
        &self,
        rec: &InstanceRecord,
        outputs: &[ExpertOutput],
        trace: &mut InstanceTrace,
    ) -> Result<Decision> {
        let mc = !rec.choices.is_empty();
        match &self.config.mode {
            RunMode::Single(name) => {
                let out = outputs
                    .iter()
                    .find(|o| &o.expert_name == name)
                    .ok_or_else(|| Error::usage(format!("no output from expert `{name}`")))?;
                self.judge_text(&out.plausible_answer, &rec.choices, name, None).await
            }
            RunMode::ColaZero { k } => {
                let (prompt, exemplar_ids) = self.prompt_for(rec, outputs, Phase::Eval, *k).await?;
                trace.prompt_fingerprint = Some(prompt.fingerprint());
                trace.exemplar_ids = exemplar_ids;
                let coordinator = self
                    .coordinator
                    .as_ref()
                    .expect("validated: cola modes have a coordinator");
                let completion = coordinator.complete(&prompt, self.config.max_new_tokens).await?;
                self.judge_text(
                    &completion.value,
                    &rec.choices,
                    coordinator.name(),
                    Some(completion.value.clone()),
                )
                .await
            }
            RunMode::EnsembleAvg if mc => {
                let mapped = self.map_each(outputs, &rec.choices).await?;
                let dists: Vec<_> = mapped.iter().map(|m| m.distribution.clone()).collect();
                let pick = ensemble_average(&dists)?.argmax();
                Ok(Decision {
                    prediction: pick.text.clone(),
                    pick: Some(pick),
                    completion: None,
                    degenerate: mapped.iter().all(|m| m.degenerate),
                })
            }
            RunMode::EnsembleVote if mc => {
                let mapped = self.map_each(outputs, &rec.choices).await?;
                let picks: Vec<ChoicePick> = mapped.iter().map(|m| m.pick.clone()).collect();
                let pick = majority_vote(&picks, &[])?;
                Ok(Decision {
                    prediction: pick.text.clone(),
                    pick: Some(pick),
                    completion: None,
                    degenerate: mapped.iter().all(|m| m.degenerate),
                })
            }
            RunMode::EnsembleAvg => self.direct_answer_average(outputs).await,
            RunMode::EnsembleVote => {
                let keys: Vec<String> = outputs
                    .iter()
                    .map(|o| normalize_direct_answer(&o.plausible_answer))
                    .collect();
                let winner = plurality(&keys, &[]).ok_or_else(|| Error::usage("ensemble over an empty panel"))?;
                Ok(Decision {
                    prediction: outputs[winner].plausible_answer.clone(),
                    pick: None,
                    completion: None,
                    degenerate: keys[winner].is_empty(),
                })
            }
            RunMode::ExportTuning => unreachable!("rejected in run()"),
        }
    }

    async fn map_each(&self, outputs: &[ExpertOutput], choices: &[String]) -> Result<Vec<MappedAnswer>> {
        in_order(
            outputs
                .iter()
                .map(|o| map_to_choice(&o.plausible_answer, choices, &self.embedder, &o.expert_name)),
        )
        .await
    }

    /// Free text to a decision: mapped onto the choices when there are any,
    /// kept verbatim otherwise.
    async fn judge_text(
        &self,
        text: &str,
        choices: &[String],
        source: &str,
        completion: Option<String>,
    ) -> Result<Decision> {
        if choices.is_empty() {
            return Ok(Decision {
                degenerate: normalize_direct_answer(text).is_empty(),
                prediction: text.to_string(),
                pick: None,
                completion,
            });
        }
        let mapped = map_to_choice(text, choices, &self.embedder, source).await?;
        Ok(Decision {
            prediction: text.to_string(),
            pick: Some(mapped.pick),
            completion,
            degenerate: mapped.degenerate,
        })
    }

    /// Direct-answer averaging: the distinct non-empty expert answers become
    /// the candidate set, each expert scores every candidate by cosine, and
    /// the candidate with the highest mean wins.
    async fn direct_answer_average(&self, outputs: &[ExpertOutput]) -> Result<Decision> {
        let mut candidates: Vec<String> = Vec::new();
        let mut keys: Vec<String> = Vec::new();
        for o in outputs {
            let key = normalize_direct_answer(&o.plausible_answer);
            if !key.is_empty() && !keys.contains(&key) {
                keys.push(key);
                candidates.push(o.plausible_answer.clone());
            }
        }
        if candidates.is_empty() {
            return Ok(Decision {
                prediction: String::new(),
                pick: None,
                completion: None,
                degenerate: true,
            });
        }
        let mapped = self.map_each(outputs, &candidates).await?;
        let dists: Vec<_> = mapped.into_iter().map(|m| m.distribution).collect();
        let pick = ensemble_average(&dists)?.argmax();
        Ok(Decision {
            prediction: pick.text,
            pick: None,
            completion: None,
            degenerate: false,
        })
    }
}
