//! Controlled corruption of expert outputs for ablation runs.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::exemplars::derive_seed;
use crate::error::{Error, Result};
use crate::types::ExpertOutput;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    None,
    /// Exchange which expert owns which caption.
    SwapCaptionLabels,
    /// Exchange which expert owns which answer.
    SwapAnswerLabels,
    DropCaptions,
    DropAnswers,
    /// Keep only the named expert.
    SingleExpert(String),
}

impl PerturbationMode {
    pub fn is_swap(&self) -> bool {
        matches!(
            self,
            PerturbationMode::SwapCaptionLabels | PerturbationMode::SwapAnswerLabels
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Tune,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Tune => "tune",
            Phase::Eval => "eval",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which phases a perturbation is active in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseScope {
    #[default]
    Both,
    TuneOnly,
    EvalOnly,
}

impl PhaseScope {
    pub fn includes(self, phase: Phase) -> bool {
        match self {
            PhaseScope::Both => true,
            PhaseScope::TuneOnly => phase == Phase::Tune,
            PhaseScope::EvalOnly => phase == Phase::Eval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub mode: PerturbationMode,
    /// Swap probability per instance; ignored by the other modes.
    #[serde(default)]
    pub probability: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phases: PhaseScope,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec::none()
    }
}

impl PerturbationSpec {
    pub fn none() -> Self {
        PerturbationSpec {
            mode: PerturbationMode::None,
            probability: 0.0,
            seed: 0,
            phases: PhaseScope::Both,
        }
    }

    pub fn swap_captions(probability: f64, seed: u64) -> Self {
        PerturbationSpec {
            mode: PerturbationMode::SwapCaptionLabels,
            probability,
            seed,
            phases: PhaseScope::Both,
        }
    }

    pub fn swap_answers(probability: f64, seed: u64) -> Self {
        PerturbationSpec {
            mode: PerturbationMode::SwapAnswerLabels,
            probability,
            seed,
            phases: PhaseScope::Both,
        }
    }

    pub fn single_expert(name: impl Into<String>) -> Self {
        PerturbationSpec {
            mode: PerturbationMode::SingleExpert(name.into()),
            ..PerturbationSpec::none()
        }
    }

    pub fn with_phases(mut self, phases: PhaseScope) -> Self {
        self.phases = phases;
        self
    }

    /// Checks the perturbation against the panel it will be applied to.
    pub fn validate(&self, panel: &[String]) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::usage(format!(
                "perturbation probability {} is outside [0, 1]",
                self.probability
            )));
        }
        match &self.mode {
            m if m.is_swap() && panel.len() != 2 => Err(Error::usage(format!(
                "label swaps are pairwise; the panel has {} experts",
                panel.len()
            ))),
            PerturbationMode::SingleExpert(name) if !panel.contains(name) => {
                Err(Error::usage(format!("single_expert `{name}` is not in the panel")))
            }
            _ => Ok(()),
        }
    }

    /// The experts left after this perturbation in `phase`.
    pub fn effective_panel(&self, panel: &[String], phase: Phase) -> Vec<String> {
        match &self.mode {
            PerturbationMode::SingleExpert(name) if self.phases.includes(phase) => vec![name.clone()],
            _ => panel.to_vec(),
        }
    }
}

/// Per-instance uniform draw in [0, 1), fixed by (seed, instance id, phase).
pub fn swap_draw(seed: u64, instance_id: &str, phase: Phase) -> f64 {
    let bits = derive_seed(seed, &format!("swap/{phase}"), instance_id) >> 11;
    bits as f64 / (1u64 << 53) as f64
}

/// Apply `spec` to one instance's outputs.
///
/// Swaps exchange a field between the two experts when the instance's draw
/// falls below `probability`; the expert names stay in place, so only label
/// ownership changes. The draw depends on the instance id, not on iteration
/// order.
pub fn apply_perturbation(
    outputs: &[ExpertOutput],
    spec: &PerturbationSpec,
    phase: Phase,
    instance_id: &str,
) -> Result<Vec<ExpertOutput>> {
    if !spec.phases.includes(phase) {
        return Ok(outputs.to_vec());
    }
    let mut out = outputs.to_vec();
    match &spec.mode {
        PerturbationMode::None => {}
        PerturbationMode::SwapCaptionLabels | PerturbationMode::SwapAnswerLabels => {
            if out.len() != 2 {
                return Err(Error::usage(format!(
                    "label swaps are pairwise; got {} expert outputs",
                    out.len()
                )));
            }
            if !(0.0..=1.0).contains(&spec.probability) {
                return Err(Error::usage("swap probability must be in [0, 1]"));
            }
            if swap_draw(spec.seed, instance_id, phase) < spec.probability {
                let (a, b) = out.split_at_mut(1);
                if spec.mode == PerturbationMode::SwapCaptionLabels {
                    std::mem::swap(&mut a[0].caption, &mut b[0].caption);
                } else {
                    std::mem::swap(&mut a[0].plausible_answer, &mut b[0].plausible_answer);
                }
            }
        }
        PerturbationMode::DropCaptions => out.iter_mut().for_each(|o| o.caption.clear()),
        PerturbationMode::DropAnswers => out.iter_mut().for_each(|o| o.plausible_answer.clear()),
        PerturbationMode::SingleExpert(name) => {
            out.retain(|o| &o.expert_name == name);
            if out.is_empty() {
                return Err(Error::usage(format!("single_expert `{name}` produced no output")));
            }
        }
    }
    Ok(out)
}
