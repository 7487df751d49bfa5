//! Clients for expert, coordinator and embedder backends, the on-disk
//! response cache, the offline trigram embedder and the mock server.

mod cache;
mod client;
mod embed;
pub mod mock;
mod protocol;

pub use cache::{CacheKey, ResponseCache};
pub use client::{BackendClient, CompletionText, DEFAULT_MAX_NEW_TOKENS};
pub use embed::{fallback_embed, fnv1a64, Embedder, EmbeddingVector, TrigramEmbedder, FALLBACK_DIM};
pub use mock::{CompletionMode, MockFixtures, MockOptions, MockServer};
pub use protocol::*;
