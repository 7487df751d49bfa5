use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::exemplars::Exemplar;
use super::question::{query_line, transform_question};
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::types::{ExpertOutput, TaskFamily};

/// Which sections a prompt carries, for a given family and expert panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub family: TaskFamily,
    /// Render order of the per-expert lines.
    pub expert_names: Vec<String>,
    pub include_captions: bool,
    pub include_answers: bool,
    pub include_choices: bool,
}

impl PromptTemplate {
    /// Full template: captions, answers, and choices for multiple-choice
    /// families.
    pub fn new(family: TaskFamily, expert_names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        PromptTemplate {
            family,
            expert_names: expert_names.into_iter().map(Into::into).collect(),
            include_captions: true,
            include_answers: true,
            include_choices: family.is_multiple_choice(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.expert_names.is_empty() {
            return Err(Error::usage("prompt template needs at least one expert"));
        }
        if !self.include_captions && !self.include_answers {
            return Err(Error::usage("prompt template must include captions, answers, or both"));
        }
        for (i, n) in self.expert_names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::usage("expert names must be non-empty"));
            }
            if self.expert_names[..i].contains(n) {
                return Err(Error::usage(format!("expert `{n}` listed twice")));
            }
        }
        Ok(())
    }
}

/// The assembled coordinator input and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    value: String,
    fingerprint: Digest,
}

impl PromptText {
    pub fn new(value: String) -> Self {
        let fingerprint = Digest::of(value.as_bytes());
        PromptText { value, fingerprint }
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn fingerprint(&self) -> Digest {
        self.fingerprint
    }

    pub fn into_string(self) -> String {
        self.value
    }
}

fn count_word(n: usize) -> String {
    const WORDS: [&str; 9] = ["two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    WORDS
        .get(n.wrapping_sub(2))
        .map(|w| w.to_string())
        .unwrap_or_else(|| n.to_string())
}

/// "A", "A and B", "A, B and C".
fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// The instruction sentence with the panel's names substituted.
pub fn instruction_sentence(names: &[String]) -> String {
    let joined = join_names(names);
    if names.len() == 1 {
        format!(
            "Answer the following multiple-choice question by {joined}'s description and its answer \
             to the visual question. {joined} is a vision-language model to provide clues."
        )
    } else {
        format!(
            "Answer the following multiple-choice question by {joined}'s description and their answers \
             to the visual question. {joined} are {} different vision-language models to provide clues.",
            count_word(names.len())
        )
    }
}

fn labeled(out: &mut String, name: &str, label: &str, text: &str) {
    if text.is_empty() {
        let _ = writeln!(out, "{name}'s {label}:");
    } else {
        let _ = writeln!(out, "{name}'s {label}: {text}");
    }
}

/// One question block, ending in `A:` with no trailing whitespace.
fn render_block(tpl: &PromptTemplate, outputs: &[ExpertOutput], query: &str, choices: &[String]) -> Result<String> {
    if outputs.len() != tpl.expert_names.len() {
        return Err(Error::usage(format!(
            "{} expert outputs for a template naming {} experts",
            outputs.len(),
            tpl.expert_names.len()
        )));
    }
    if let Some((o, n)) = outputs
        .iter()
        .zip(&tpl.expert_names)
        .find(|(o, n)| o.expert_name != **n)
    {
        return Err(Error::usage(format!(
            "expert output for `{}` is in the slot of `{n}`",
            o.expert_name
        )));
    }
    if tpl.include_choices && choices.is_empty() {
        return Err(Error::usage("template includes choices but none were given"));
    }

    let mut s = instruction_sentence(&tpl.expert_names);
    s.push_str("\n\n");
    if tpl.include_captions {
        for o in outputs {
            labeled(&mut s, &o.expert_name, "description", &o.caption);
        }
        s.push('\n');
    }
    s.push_str(&query_line(query));
    s.push_str("\n\n");
    if tpl.include_answers {
        for o in outputs {
            labeled(&mut s, &o.expert_name, "answer", &o.plausible_answer);
        }
        s.push('\n');
    }
    if tpl.include_choices {
        let _ = write!(s, "Choices: [{}]\n\n", choices.join(", "));
    }
    s.push_str("A:");
    Ok(s)
}

/// Assemble the coordinator prompt.
///
/// Layout, one blank line between sections: instruction sentence; one
/// `<Name>'s description: <caption>` line per expert; `Q: <query>`; one
/// `<Name>'s answer: <answer>` line per expert; `Choices: [a, b, ...]`;
/// and `A:`. Exemplars come first, each as a full block followed by
/// ` <gold>` and a blank line, so a k-shot prompt ends with the zero-shot
/// prompt for the same instance.
///
/// `outputs` must already be perturbed and ordered as `tpl.expert_names`;
/// `query` must already be task-transformed.
pub fn build_prompt(
    tpl: &PromptTemplate,
    outputs: &[ExpertOutput],
    query: &str,
    choices: &[String],
    exemplars: &[Exemplar],
) -> Result<PromptText> {
    tpl.validate()?;
    let mut s = String::new();
    for ex in exemplars {
        let q = transform_question(ex.record.family, &ex.record.question);
        s.push_str(&render_block(tpl, &ex.outputs, &q, &ex.record.choices)?);
        let _ = write!(s, " {}\n\n", ex.gold_text);
    }
    s.push_str(&render_block(tpl, outputs, query, choices)?);
    Ok(PromptText::new(s))
}
