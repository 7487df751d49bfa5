//! Prompt assembly, task-specific query rewriting, k-shot exemplars and
//! ablation perturbations. Everything here is pure.

mod exemplars;
mod perturb;
mod question;
mod template;

pub use exemplars::{derive_seed, sample_exemplars, Exemplar};
pub use perturb::{apply_perturbation, swap_draw, PerturbationMode, PerturbationSpec, Phase, PhaseScope};
pub use question::{query_line, transform_question};
pub use template::{build_prompt, instruction_sentence, PromptTemplate, PromptText};
