use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{BackendHandle, Role, DEFAULT_MAX_NEW_TOKENS};
use crate::datasets::DatasetManifest;
use crate::digest::{canonical_json, Digest};
use crate::error::{Error, Result};
use crate::promptkit::{PerturbationMode, PerturbationSpec, Phase, PromptTemplate};
use crate::types::{Split, TaskFamily};

/// Environment variable naming the default cache root.
pub const CACHE_DIR_ENV: &str = "VLMC_CACHE_DIR";

/// What a run computes. Written as a string in config files:
/// `single:<expert>`, `ensemble_avg`, `ensemble_vote`, `cola_zero` or
/// `cola_zero.k=<k>`, `export_tuning`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RunMode {
    Single(String),
    EnsembleAvg,
    EnsembleVote,
    ColaZero { k: usize },
    ExportTuning,
}

impl RunMode {
    pub fn shots(&self) -> Option<usize> {
        match self {
            RunMode::ColaZero { k } => Some(*k),
            _ => None,
        }
    }

    pub fn needs_coordinator(&self) -> bool {
        matches!(self, RunMode::ColaZero { .. })
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunMode::Single(n) => write!(f, "single:{n}"),
            RunMode::EnsembleAvg => f.write_str("ensemble_avg"),
            RunMode::EnsembleVote => f.write_str("ensemble_vote"),
            RunMode::ColaZero { k } => write!(f, "cola_zero.k={k}"),
            RunMode::ExportTuning => f.write_str("export_tuning"),
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::usage(format!(
                "unknown mode `{s}` (expected single:<expert> | ensemble_avg | ensemble_vote | cola_zero[.k=<k>] | export_tuning)"
            ))
        };
        match s {
            "ensemble_avg" => return Ok(RunMode::EnsembleAvg),
            "ensemble_vote" => return Ok(RunMode::EnsembleVote),
            "export_tuning" => return Ok(RunMode::ExportTuning),
            "cola_zero" => return Ok(RunMode::ColaZero { k: 0 }),
            _ => {}
        }
        if let Some(name) = s.strip_prefix("single:") {
            return if name.is_empty() {
                Err(bad())
            } else {
                Ok(RunMode::Single(name.to_string()))
            };
        }
        if let Some(k) = s.strip_prefix("cola_zero.k=") {
            return k.parse().map(|k| RunMode::ColaZero { k }).map_err(|_| bad());
        }
        Err(bad())
    }
}

impl TryFrom<String> for RunMode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RunMode> for String {
    fn from(m: RunMode) -> String {
        m.to_string()
    }
}

/// Prompt sections to include. Family and expert names come from the
/// dataset and the panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateOptions {
    #[serde(default = "yes")]
    pub include_captions: bool,
    #[serde(default = "yes")]
    pub include_answers: bool,
    /// Defaults to whether the family is multiple-choice.
    #[serde(default)]
    pub include_choices: Option<bool>,
}

fn yes() -> bool {
    true
}

impl Default for TemplateOptions {
    fn default() -> Self {
        TemplateOptions {
            include_captions: true,
            include_answers: true,
            include_choices: None,
        }
    }
}

impl TemplateOptions {
    pub fn template(&self, family: TaskFamily, expert_names: Vec<String>) -> PromptTemplate {
        PromptTemplate {
            family,
            expert_names,
            include_captions: self.include_captions,
            include_answers: self.include_answers,
            include_choices: self.include_choices.unwrap_or(family.is_multiple_choice()),
        }
    }
}

fn default_split() -> Split {
    Split::Val
}

fn default_embedder() -> BackendHandle {
    BackendHandle::builtin_embedder()
}

fn default_fanout() -> usize {
    8
}

fn default_max_new_tokens() -> u32 {
    DEFAULT_MAX_NEW_TOKENS
}

/// One run, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetManifest,
    #[serde(default = "default_split")]
    pub eval_split: Split,
    pub panel: Vec<BackendHandle>,
    #[serde(default)]
    pub coordinator: Option<BackendHandle>,
    #[serde(default = "default_embedder")]
    pub embedder: BackendHandle,
    pub mode: RunMode,
    #[serde(default)]
    pub perturb: PerturbationSpec,
    #[serde(default)]
    pub template: TemplateOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fanout")]
    pub fanout_width: usize,
    /// Response cache root; falls back to `$VLMC_CACHE_DIR`, then
    /// `runs/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    /// Evaluate only the first N records of the split.
    #[serde(default)]
    pub limit: Option<usize>,
}

impl RunConfig {
    /// Parse a config file, apply `KEY=VALUE` overrides (dotted paths), and
    /// resolve relative dataset paths against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.resolve_paths(base);
        if let Some(dir) = &cfg.cache_dir {
            if dir.is_relative() {
                cfg.cache_dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::usage(format!("invalid config: {e}")))?;
        if overrides.is_empty() {
            return Ok(cfg);
        }
        let mut value = serde_json::to_value(&cfg)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| Error::usage(format!("invalid config after overrides: {e}")))
    }

    /// Identity of everything that can change results. The cache location
    /// and fan-out width are excluded.
    pub fn fingerprint(&self) -> Digest {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("cache_dir");
            m.remove("fanout_width");
        }
        Digest::of(canonical_json(&v).expect("value serializes"))
    }

    pub fn expert_names(&self) -> Vec<String> {
        self.panel.iter().map(|h| h.name.clone()).collect()
    }

    /// Experts whose outputs reach the prompt in `phase`.
    pub fn effective_panel(&self, phase: Phase) -> Vec<String> {
        self.perturb.effective_panel(&self.expert_names(), phase)
    }

    pub fn template_for(&self, phase: Phase) -> PromptTemplate {
        self.template.template(self.dataset.family, self.effective_panel(phase))
    }

    pub fn resolved_cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs/cache"))
    }

    /// Every check that can be made without touching the network.
    pub fn validate(&self) -> Result<()> {
        if self.panel.is_empty() {
            return Err(Error::usage("`panel` must name at least one expert"));
        }
        let names = self.expert_names();
        for (i, h) in self.panel.iter().enumerate() {
            if h.role != Role::Expert {
                return Err(Error::usage(format!("`panel.{i}` ({}) must have role expert", h.name)));
            }
            if h.name.is_empty() {
                return Err(Error::usage(format!("`panel.{i}.name` is empty")));
            }
            if names[..i].contains(&h.name) {
                return Err(Error::usage(format!("`panel.{i}.name` `{}` is not unique", h.name)));
            }
        }
        if let Some(c) = &self.coordinator {
            if c.role != Role::Coordinator {
                return Err(Error::usage("`coordinator` must have role coordinator"));
            }
        }
        if self.embedder.role != Role::Embedder {
            return Err(Error::usage("`embedder` must have role embedder"));
        }
        if self.mode.needs_coordinator() && self.coordinator.is_none() {
            return Err(Error::usage(format!(
                "`coordinator` is required for mode {}",
                self.mode
            )));
        }
        if let RunMode::Single(name) = &self.mode {
            if !names.contains(name) {
                return Err(Error::usage(format!(
                    "`mode` names expert `{name}`, which is not in `panel`"
                )));
            }
            if !self.effective_panel(Phase::Eval).contains(name) {
                return Err(Error::usage(format!(
                    "`perturb` removes expert `{name}` that `mode` evaluates"
                )));
            }
        }
        self.perturb
            .validate(&names)
            .map_err(|e| Error::usage(format!("`perturb`: {e}")))?;
        if self.fanout_width == 0 {
            return Err(Error::usage("`fanout_width` must be at least 1"));
        }
        if !self.template.include_captions && !self.template.include_answers {
            return Err(Error::usage("`template` must include captions, answers, or both"));
        }
        if self.template.include_choices == Some(true) && !self.dataset.family.is_multiple_choice() {
            return Err(Error::usage(
                "`template.include_choices` is set but VQA_DA has no choices",
            ));
        }
        let needs_train = matches!(self.mode, RunMode::ExportTuning) || self.mode.shots().unwrap_or(0) > 0;
        if needs_train && !self.dataset.paths.contains_key(&Split::Train) {
            return Err(Error::usage(format!(
                "`dataset.paths.train` is required for mode {}",
                self.mode
            )));
        }
        if !matches!(self.mode, RunMode::ExportTuning) && !self.dataset.paths.contains_key(&self.eval_split) {
            return Err(Error::usage(format!(
                "`dataset.paths.{}` is required to evaluate the {} split",
                self.eval_split, self.eval_split
            )));
        }
        if matches!(self.perturb.mode, PerturbationMode::SingleExpert(_)) && self.mode == RunMode::EnsembleAvg {
            tracing::warn!("ensemble over a single expert: identical to single mode");
        }
        Ok(())
    }
}

/// Apply one `dotted.path=value` override. The key must already exist in the
/// fully-defaulted config; the value is read as JSON when it parses, else
/// as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("override `{assignment}` is not KEY=VALUE")))?;
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let next = match node {
            Value::Object(m) => m.get_mut(*seg),
            Value::Array(a) => seg.parse::<usize>().ok().and_then(|j| a.get_mut(j)),
            _ => None,
        };
        node = next.ok_or_else(|| {
            Error::usage(format!(
                "override key `{key}` does not exist in the config (no `{}`)",
                segments[..=i].join(".")
            ))
        })?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}
