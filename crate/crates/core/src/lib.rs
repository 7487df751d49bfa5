//! Coordinate several vision-language expert models through a language
//! model coordinator, and evaluate the result against single-expert and
//! ensemble baselines.
//!
//! Experts, coordinator and embedder are remote backends reached over a
//! small JSON protocol (see [`backends`]). A run loads a benchmark split,
//! asks every expert for a caption and a plausible answer, builds the
//! coordinator prompt, maps the completion onto the answer choices and
//! scores it.

pub mod backends;
pub mod cli;
pub mod datasets;
pub mod digest;
pub mod error;
pub mod evalharness;
pub mod mapping;
pub mod promptkit;
pub mod text;
pub mod types;

pub use error::{Error, Result};
pub use text::{normalize_text, NormalizedText};
pub use types::{ExpertOutput, ImageKind, ImageRef, InstanceRecord, Split, TaskFamily};
