//! JSON wire protocol shared by every backend role.
//!
//! All endpoints are `POST` with UTF-8 JSON bodies:
//!
//! | path           | request                                   | response                       |
//! |----------------|-------------------------------------------|--------------------------------|
//! | `/v1/caption`  | `{"image": {"kind", "value"}}`            | `{"caption"}`                  |
//! | `/v1/answer`   | `{"image", "question"}`                   | `{"answer"}`                   |
//! | `/v1/complete` | `{"prompt", "max_new_tokens", "greedy"}`  | `{"completion"}`               |
//! | `/v1/embed`    | `{"texts": [...]}`                        | `{"vectors": [[...]], "dim"}`  |
//! | `/v1/health`   | `{}`                                      | `{"ok", "roles"}`              |
//!
//! Failures are non-2xx with `{"error": {"code", "message"}}`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::ImageRef;

pub const CAPTION_PATH: &str = "/v1/caption";
pub const ANSWER_PATH: &str = "/v1/answer";
pub const COMPLETE_PATH: &str = "/v1/complete";
pub const EMBED_PATH: &str = "/v1/embed";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Expert,
    Coordinator,
    Embedder,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Expert => "expert",
            Role::Coordinator => "coordinator",
            Role::Embedder => "embedder",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    2
}

/// Identity and transport settings of one backend.
///
/// A `base_url` of `builtin:trigram` selects the in-process fallback
/// embedder instead of a network endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendHandle {
    pub name: String,
    pub base_url: String,
    pub role: Role,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

pub const BUILTIN_TRIGRAM: &str = "builtin:trigram";

impl BackendHandle {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, role: Role) -> Self {
        BackendHandle {
            name: name.into(),
            base_url: base_url.into(),
            role,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
        }
    }

    pub fn builtin_embedder() -> Self {
        BackendHandle::new("trigram", BUILTIN_TRIGRAM, Role::Embedder)
    }

    pub fn is_builtin(&self) -> bool {
        self.base_url.starts_with("builtin:")
    }

    pub fn endpoint(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image: ImageRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub image: ImageRef,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub greedy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub completion: String,
    /// Set by backends that report hitting the token limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub roles: Vec<Role>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

impl ErrorBody {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorBody {
            error: ErrorDetail {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}
