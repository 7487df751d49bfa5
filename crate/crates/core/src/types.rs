//! Domain types shared by every module.
//!
//! All of these are plain immutable values; they are `Send + Sync` and cheap
//! to clone into concurrent tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::text::normalize_text;

/// The four task families the harness evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskFamily {
    /// Visual question answering with an explicit choice list.
    VqaMc,
    /// Open-ended visual question answering scored against annotator answers.
    VqaDa,
    /// Visual entailment over a text premise.
    Entailment,
    /// Spatial relation verification over a text premise.
    Spatial,
}

pub const ENTAILMENT_CHOICES: [&str; 3] = ["yes", "no", "maybe"];
pub const SPATIAL_CHOICES: [&str; 2] = ["yes", "no"];

impl TaskFamily {
    pub const ALL: [TaskFamily; 4] = [
        TaskFamily::VqaMc,
        TaskFamily::VqaDa,
        TaskFamily::Entailment,
        TaskFamily::Spatial,
    ];

    /// The fixed choice set for families that have one.
    pub fn fixed_choices(self) -> Option<&'static [&'static str]> {
        match self {
            TaskFamily::Entailment => Some(&ENTAILMENT_CHOICES),
            TaskFamily::Spatial => Some(&SPATIAL_CHOICES),
            TaskFamily::VqaMc | TaskFamily::VqaDa => None,
        }
    }

    /// Whether predictions are picked from a choice list.
    pub fn is_multiple_choice(self) -> bool {
        !matches!(self, TaskFamily::VqaDa)
    }

    /// Premise-style families phrase the query as a yes/no description check.
    pub fn is_premise(self) -> bool {
        matches!(self, TaskFamily::Entailment | TaskFamily::Spatial)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::VqaMc => "VQA_MC",
            TaskFamily::VqaDa => "VQA_DA",
            TaskFamily::Entailment => "ENTAILMENT",
            TaskFamily::Spatial => "SPATIAL",
        }
    }

    /// Lowercase slug used for file names.
    pub fn slug(self) -> &'static str {
        match self {
            TaskFamily::VqaMc => "vqa_mc",
            TaskFamily::VqaDa => "vqa_da",
            TaskFamily::Entailment => "entailment",
            TaskFamily::Spatial => "spatial",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskFamily::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s) || f.slug() == s)
            .ok_or_else(|| Error::usage(format!("unknown task family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    Path,
    Url,
    OpaqueId,
}

/// Transport form of an image. Never decoded here; backends resolve it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub kind: ImageKind,
    pub value: String,
}

impl ImageRef {
    pub fn opaque(id: impl Into<String>) -> Self {
        ImageRef {
            kind: ImageKind::OpaqueId,
            value: id.into(),
        }
    }

    pub fn path(p: impl Into<String>) -> Self {
        ImageRef {
            kind: ImageKind::Path,
            value: p.into(),
        }
    }
}

/// One benchmark item in canonical form.
///
/// Field order is the canonical JSONL column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub image: ImageRef,
    pub family: TaskFamily,
    /// Raw question, or the raw premise for entailment and spatial items.
    pub question: String,
    #[serde(default)]
    pub choices: Vec<String>,
    #[serde(default)]
    pub gold_choice: Option<usize>,
    /// Annotator answers, repeats kept as votes.
    #[serde(default)]
    pub gold_direct_answers: Vec<String>,
    pub split: Split,
}

impl InstanceRecord {
    /// The gold answer as text: the gold choice for multiple-choice records,
    /// otherwise the most frequent direct answer (first occurrence wins ties).
    pub fn gold_text(&self) -> Option<String> {
        if let Some(idx) = self.gold_choice {
            return self.choices.get(idx).cloned();
        }
        most_frequent(&self.gold_direct_answers)
    }
}

/// Most frequent entry by normalized form; returns the first raw spelling of
/// the winning group.
pub fn most_frequent(answers: &[String]) -> Option<String> {
    let mut groups: Vec<(String, usize, &String)> = Vec::new();
    for a in answers {
        let key = normalize_text(a).into_string();
        match groups.iter_mut().find(|(k, _, _)| *k == key) {
            Some(g) => g.1 += 1,
            None => groups.push((key, 1, a)),
        }
    }
    let mut best: Option<&(String, usize, &String)> = None;
    for g in &groups {
        if best.is_none_or(|b| g.1 > b.1) {
            best = Some(g);
        }
    }
    best.map(|(_, _, raw)| (*raw).clone())
}

/// One expert's caption and plausible answer for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertOutput {
    pub expert_name: String,
    pub caption: String,
    pub plausible_answer: String,
}

impl ExpertOutput {
    pub fn new(
        expert_name: impl Into<String>,
        caption: impl Into<String>,
        plausible_answer: impl Into<String>,
    ) -> Self {
        ExpertOutput {
            expert_name: expert_name.into(),
            caption: caption.into(),
            plausible_answer: plausible_answer.into(),
        }
    }

    /// True when either field normalizes to nothing.
    pub fn is_degenerate(&self) -> bool {
        normalize_text(&self.caption).is_empty() || normalize_text(&self.plausible_answer).is_empty()
    }
}
