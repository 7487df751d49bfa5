use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use tokio::sync::Semaphore;

use super::cache::{CacheKey, ResponseCache};
use super::embed::{fallback_embed, Embedder, EmbeddingVector};
use super::protocol::*;
use crate::error::{Error, Result};
use crate::promptkit::PromptText;
use crate::types::ImageRef;

/// Default token budget for coordinator completions.
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 30;

/// Text returned by one coordinator call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct CompletionText {
    pub value: String,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
}

/// Client for one backend over the JSON wire protocol.
///
/// Safe to share between tasks. Every request is keyed into the optional
/// response cache; transport attempts and cache hits are counted so tests can
/// assert on them.
#[derive(Debug)]
pub struct BackendClient {
    handle: BackendHandle,
    http: reqwest::Client,
    cache: Option<Arc<ResponseCache>>,
    limiter: Option<Arc<Semaphore>>,
    retry_backoff: Duration,
    transport_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl BackendClient {
    pub fn new(handle: BackendHandle) -> Result<Self> {
        if handle.name.is_empty() {
            return Err(Error::usage("backend name must be non-empty"));
        }
        if handle.timeout_ms == 0 {
            return Err(Error::usage(format!(
                "backend `{}`: timeout_ms must be > 0",
                handle.name
            )));
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(handle.timeout_ms))
            .build()
            .map_err(|e| Error::usage(format!("cannot build HTTP client: {e}")))?;
        Ok(BackendClient {
            handle,
            http,
            cache: None,
            limiter: None,
            retry_backoff: Duration::from_millis(50),
            transport_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Share a concurrency budget with other clients.
    pub fn with_limiter(mut self, limiter: Arc<Semaphore>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_retry_backoff(mut self, backoff: Duration) -> Self {
        self.retry_backoff = backoff;
        self
    }

    pub fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    pub fn name(&self) -> &str {
        &self.handle.name
    }

    /// Number of HTTP attempts made so far, retries included.
    pub fn transport_calls(&self) -> u64 {
        self.transport_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    fn require_role(&self, role: Role, op: &str) -> Result<()> {
        if self.handle.role != role {
            return Err(Error::usage(format!(
                "`{op}` needs a {role} backend, but `{}` is a {}",
                self.handle.name, self.handle.role
            )));
        }
        if self.handle.is_builtin() && role != Role::Embedder {
            return Err(Error::usage(format!(
                "builtin backend `{}` only supports embed",
                self.handle.name
            )));
        }
        Ok(())
    }

    pub async fn caption(&self, image: &ImageRef) -> Result<String> {
        self.require_role(Role::Expert, "caption")?;
        let req = CaptionRequest { image: image.clone() };
        let resp: CaptionResponse = self.call("caption", CAPTION_PATH, &req, |_| Ok(())).await?;
        Ok(resp.caption)
    }

    /// `query` must already be task-transformed.
    pub async fn plausible_answer(&self, image: &ImageRef, query: &str) -> Result<String> {
        self.require_role(Role::Expert, "plausible_answer")?;
        let req = AnswerRequest {
            image: image.clone(),
            question: query.to_string(),
        };
        let resp: AnswerResponse = self.call("answer", ANSWER_PATH, &req, |_| Ok(())).await?;
        Ok(resp.answer)
    }

    /// Greedy completion; the request pins `greedy: true`.
    pub async fn complete(&self, prompt: &PromptText, max_new_tokens: u32) -> Result<CompletionText> {
        self.require_role(Role::Coordinator, "complete")?;
        let req = CompleteRequest {
            prompt: prompt.value().to_string(),
            max_new_tokens,
            greedy: true,
        };
        let resp: CompleteResponse = self.call("complete", COMPLETE_PATH, &req, |_| Ok(())).await?;
        Ok(CompletionText {
            value: resp.completion,
            backend: self.handle.name.clone(),
            truncated: resp.truncated,
        })
    }

    pub async fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.require_role(Role::Embedder, "embed")?;
        if texts.is_empty() {
            return Err(Error::usage("embed requires at least one text"));
        }
        if self.handle.is_builtin() {
            return Ok(texts.iter().map(|t| fallback_embed(t)).collect());
        }
        let n = texts.len();
        let backend = self.handle.name.clone();
        let req = EmbedRequest { texts: texts.to_vec() };
        let resp: EmbedResponse = self
            .call("embed", EMBED_PATH, &req, |r: &EmbedResponse| {
                check_embed_response(&backend, r, n)
            })
            .await?;
        resp.vectors
            .into_iter()
            .map(|v| {
                EmbeddingVector::new(v).map_err(|e| Error::protocol(&self.handle.name, "bad_vector", e.to_string()))
            })
            .collect()
    }

    /// Health is never cached.
    pub async fn health(&self) -> Result<HealthResponse> {
        if self.handle.is_builtin() {
            return Ok(HealthResponse {
                ok: true,
                roles: vec![Role::Embedder],
            });
        }
        let v = self.transport(HEALTH_PATH, &serde_json::json!({})).await?;
        let h: HealthResponse = serde_json::from_value(v)
            .map_err(|e| Error::protocol(&self.handle.name, "malformed_response", e.to_string()))?;
        if !h.ok {
            return Err(Error::protocol(
                &self.handle.name,
                "unhealthy",
                "backend reported ok=false",
            ));
        }
        if !h.roles.contains(&self.handle.role) {
            return Err(Error::protocol(
                &self.handle.name,
                "missing_role",
                format!("backend does not serve the {} role", self.handle.role),
            ));
        }
        Ok(h)
    }

    async fn call<Req, Resp, V>(&self, op: &str, path: &str, req: &Req, validate: V) -> Result<Resp>
    where
        Req: Serialize,
        Resp: DeserializeOwned,
        V: Fn(&Resp) -> Result<()>,
    {
        let body = serde_json::to_value(req)?;
        let parse = |v: Value| -> Result<Resp> {
            let r: Resp = serde_json::from_value(v)
                .map_err(|e| Error::protocol(&self.handle.name, "malformed_response", e.to_string()))?;
            validate(&r)?;
            Ok(r)
        };

        let Some(cache) = &self.cache else {
            return parse(self.transport(path, &body).await?);
        };
        let key = CacheKey::new(&self.handle.name, op, &body)?;
        let _guard = cache.lock(&key).await;
        if let Some(v) = cache.get(&key).await? {
            if let Ok(r) = parse(v) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(r);
            }
        }
        let v = self.transport(path, &body).await?;
        let r = parse(v.clone())?;
        cache.put(&key, &v).await?;
        Ok(r)
    }

    /// POST with retries. Connection failures, timeouts, 429 and 5xx are
    /// retried; any other delivered response is final.
    async fn transport(&self, path: &str, body: &Value) -> Result<Value> {
        let url = self.handle.endpoint(path);
        let attempts = 1 + self.handle.max_retries;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                tokio::time::sleep(self.retry_backoff * attempt).await;
            }
            let _permit = match &self.limiter {
                Some(l) => Some(l.acquire().await.expect("limiter closed")),
                None => None,
            };
            self.transport_calls.fetch_add(1, Ordering::Relaxed);
            let resp = match self.http.post(&url).json(body).send().await {
                Ok(r) => r,
                Err(e) => {
                    last = describe_reqwest_error(&e);
                    tracing::debug!(backend = %self.handle.name, attempt, error = %last, "transport failure");
                    continue;
                }
            };
            let status = resp.status();
            let bytes = match resp.bytes().await {
                Ok(b) => b,
                Err(e) => {
                    last = describe_reqwest_error(&e);
                    continue;
                }
            };
            if status.is_success() {
                return serde_json::from_slice(&bytes).map_err(|e| {
                    Error::protocol(&self.handle.name, "malformed_response", format!("invalid JSON: {e}"))
                });
            }
            let (code, message) = match serde_json::from_slice::<ErrorBody>(&bytes) {
                Ok(b) => (b.error.code, b.error.message),
                Err(_) => (
                    format!("http_{}", status.as_u16()),
                    String::from_utf8_lossy(&bytes).into_owned(),
                ),
            };
            if status.is_server_error() || status.as_u16() == 429 {
                last = format!("HTTP {status}: {message}");
                continue;
            }
            return Err(Error::Protocol {
                backend: self.handle.name.clone(),
                code,
                message,
            });
        }
        Err(Error::Transport {
            backend: self.handle.name.clone(),
            attempts,
            message: last,
        })
    }
}

fn describe_reqwest_error(e: &reqwest::Error) -> String {
    if e.is_timeout() {
        format!("timed out: {e}")
    } else if e.is_connect() {
        format!("connection failed: {e}")
    } else {
        e.to_string()
    }
}

fn check_embed_response(backend: &str, r: &EmbedResponse, expected: usize) -> Result<()> {
    if r.vectors.len() != expected {
        return Err(Error::protocol(
            backend,
            "bad_embedding_count",
            format!("sent {expected} texts, got {} vectors", r.vectors.len()),
        ));
    }
    if r.dim == 0 || r.vectors.iter().any(|v| v.len() != r.dim) {
        return Err(Error::protocol(
            backend,
            "bad_embedding_dim",
            format!("vectors do not all have dim {}", r.dim),
        ));
    }
    Ok(())
}

#[async_trait]
impl Embedder for BackendClient {
    async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.embed_texts(texts).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_timeout() {
        let mut h = BackendHandle::new("x", "http://127.0.0.1:1", Role::Expert);
        h.timeout_ms = 0;
        assert!(matches!(BackendClient::new(h), Err(Error::Usage(_))));
    }

    #[tokio::test]
    async fn role_is_checked_before_network() {
        let c = BackendClient::new(BackendHandle::new("coord", "http://127.0.0.1:1", Role::Coordinator)).unwrap();
        let err = c.caption(&ImageRef::opaque("x")).await.unwrap_err();
        assert!(matches!(err, Error::Usage(_)), "{err}");
        assert_eq!(c.transport_calls(), 0);
    }

    #[tokio::test]
    async fn empty_embed_batch_is_usage_error() {
        let c = BackendClient::new(BackendHandle::new("emb", "http://127.0.0.1:1", Role::Embedder)).unwrap();
        assert!(matches!(c.embed_texts(&[]).await, Err(Error::Usage(_))));
        assert_eq!(c.transport_calls(), 0);
    }

    #[tokio::test]
    async fn builtin_embedder_needs_no_network() {
        let c = BackendClient::new(BackendHandle::builtin_embedder()).unwrap();
        let v = c.embed_texts(&["grass".into()]).await.unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].dim(), super::super::embed::FALLBACK_DIM);
        assert!(c.health().await.is_ok());
    }

    #[tokio::test]
    async fn unreachable_backend_exhausts_retries() {
        // Port 9 (discard) on localhost is not listening in the sandbox.
        let mut h = BackendHandle::new("dead", "http://127.0.0.1:9", Role::Expert);
        h.max_retries = 1;
        h.timeout_ms = 500;
        let c = BackendClient::new(h)
            .unwrap()
            .with_retry_backoff(Duration::from_millis(1));
        let err = c.caption(&ImageRef::opaque("x")).await.unwrap_err();
        match err {
            Error::Transport { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("expected transport error, got {other}"),
        }
        assert_eq!(c.transport_calls(), 2);
    }
}
