//! Fixture-driven mock server speaking the backend wire protocol.
//!
//! One server hosts every role. Experts are addressed by a path prefix
//! (`/OFA/v1/caption`); a bare `/v1/caption` works when the fixtures name a
//! single expert. The completion mode can likewise be overridden per request
//! with a prefix (`/oracle/v1/complete`, `/fixed:maybe/v1/complete`), so one
//! server can stand in for several coordinators.
//!
//! Fixture directory layout:
//!
//! * `captions.jsonl`: `{"expert", "image", "caption"}`
//! * `answers.jsonl`: `{"expert", "image", "question", "answer"}`
//! * `completions.jsonl`: `{"prompt", "completion"}` (needed only in `fixtures` mode)
//! * `dataset.jsonl`: canonical records, the sidecar for `oracle` mode

use std::collections::HashMap;
use std::fmt;
use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::embed::{fallback_embed, FALLBACK_DIM};
use super::protocol::*;
use crate::datasets::read_canonical_jsonl;
use crate::error::{Error, Result};
use crate::promptkit::{query_line, transform_question};

/// How the mock answers `/v1/complete`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompletionMode {
    /// Look the prompt up in `completions.jsonl`.
    Fixtures,
    /// Return the named expert's answer line from the query block.
    EchoExpert(String),
    /// Return the gold answer of the sidecar record whose question the prompt asks.
    Oracle,
    /// Always return this string.
    Fixed(String),
}

impl FromStr for CompletionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "fixtures" {
            return Ok(CompletionMode::Fixtures);
        }
        if s == "oracle" {
            return Ok(CompletionMode::Oracle);
        }
        if let Some(name) = s.strip_prefix("echo-expert:") {
            if name.is_empty() {
                return Err(Error::usage("echo-expert mode needs an expert name"));
            }
            return Ok(CompletionMode::EchoExpert(name.to_string()));
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let v = v.strip_prefix('"').and_then(|x| x.strip_suffix('"')).unwrap_or(v);
            return Ok(CompletionMode::Fixed(v.to_string()));
        }
        Err(Error::usage(format!(
            "unknown completion mode `{s}` (expected fixtures | oracle | echo-expert:<name> | fixed:<text>)"
        )))
    }
}

impl fmt::Display for CompletionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompletionMode::Fixtures => f.write_str("fixtures"),
            CompletionMode::Oracle => f.write_str("oracle"),
            CompletionMode::EchoExpert(n) => write!(f, "echo-expert:{n}"),
            CompletionMode::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CaptionRow {
    expert: String,
    image: String,
    caption: String,
}

#[derive(Debug, Deserialize)]
struct AnswerRow {
    expert: String,
    image: String,
    question: String,
    answer: String,
}

#[derive(Debug, Deserialize)]
struct CompletionRow {
    prompt: String,
    completion: String,
}

/// Everything the mock knows how to answer.
#[derive(Debug, Clone, Default)]
pub struct MockFixtures {
    experts: Vec<String>,
    captions: HashMap<(String, String), String>,
    answers: HashMap<(String, String, String), String>,
    completions: HashMap<String, String>,
    oracle: HashMap<String, String>,
}

impl MockFixtures {
    pub fn load(dir: &Path) -> Result<Self> {
        let mut fx = MockFixtures::default();
        for row in read_jsonl::<CaptionRow>(&dir.join("captions.jsonl"))? {
            fx.add_caption(&row.expert, &row.image, &row.caption);
        }
        for row in read_jsonl::<AnswerRow>(&dir.join("answers.jsonl"))? {
            fx.add_answer(&row.expert, &row.image, &row.question, &row.answer);
        }
        let completions = dir.join("completions.jsonl");
        if completions.exists() {
            for row in read_jsonl::<CompletionRow>(&completions)? {
                fx.completions.insert(row.prompt, row.completion);
            }
        }
        let sidecar = dir.join("dataset.jsonl");
        if sidecar.exists() {
            for rec in read_canonical_jsonl(&sidecar)? {
                if let Some(gold) = rec.gold_text() {
                    fx.add_oracle(&query_line(&transform_question(rec.family, &rec.question)), &gold);
                }
            }
        }
        Ok(fx)
    }

    fn note_expert(&mut self, expert: &str) {
        if !self.experts.iter().any(|e| e == expert) {
            self.experts.push(expert.to_string());
        }
    }

    pub fn add_caption(&mut self, expert: &str, image: &str, caption: &str) -> &mut Self {
        self.note_expert(expert);
        self.captions
            .insert((expert.to_string(), image.to_string()), caption.to_string());
        self
    }

    pub fn add_answer(&mut self, expert: &str, image: &str, question: &str, answer: &str) -> &mut Self {
        self.note_expert(expert);
        self.answers.insert(
            (expert.to_string(), image.to_string(), question.to_string()),
            answer.to_string(),
        );
        self
    }

    pub fn add_completion(&mut self, prompt: &str, completion: &str) -> &mut Self {
        self.completions.insert(prompt.to_string(), completion.to_string());
        self
    }

    /// Registers a gold answer keyed by the rendered `Q:` line.
    pub fn add_oracle(&mut self, q_line: &str, gold: &str) -> &mut Self {
        self.oracle
            .entry(q_line.to_string())
            .or_insert_with(|| gold.to_string());
        self
    }

    pub fn experts(&self) -> &[String] {
        &self.experts
    }

    pub fn image_count(&self, expert: &str) -> usize {
        self.captions.keys().filter(|(e, _)| e == expert).count()
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MockOptions {
    pub mode: CompletionMode,
    /// Delay before every response; lets tests provoke client timeouts.
    pub latency: Option<Duration>,
}

impl Default for MockOptions {
    fn default() -> Self {
        MockOptions {
            mode: CompletionMode::Fixtures,
            latency: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRequest {
    pub path: String,
    pub body: Value,
}

struct MockState {
    fixtures: MockFixtures,
    options: MockOptions,
    log: Mutex<Vec<LoggedRequest>>,
}

/// A running mock server. Dropping it shuts the server down.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `127.0.0.1:port` (0 picks a free port) and serves in the
    /// background on the current runtime.
    pub async fn start(fixtures: MockFixtures, options: MockOptions, port: u16) -> Result<Self> {
        if options.mode == CompletionMode::Fixtures && fixtures.completions.is_empty() {
            tracing::warn!("mock in fixtures mode has no completions; /v1/complete will 404");
        }
        let listener = TcpListener::bind(("127.0.0.1", port)).await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            fixtures,
            options,
            log: Mutex::new(Vec::new()),
        });
        let app = Router::new().fallback(handle).with_state(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                tracing::error!(error = %e, "mock server stopped");
            }
        });
        tracing::info!(%addr, "mock backend listening");
        Ok(MockServer {
            addr,
            state,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn expert_url(&self, expert: &str) -> String {
        format!("{}/{}", self.url(), expert)
    }

    pub fn coordinator_url(&self, mode: Option<&str>) -> String {
        match mode {
            Some(m) => format!("{}/{}", self.url(), m),
            None => self.url(),
        }
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.log.lock().expect("log poisoned").clone()
    }

    /// Number of logged requests whose path ends with `suffix`.
    pub fn count(&self, suffix: &str) -> usize {
        self.state
            .log
            .lock()
            .expect("log poisoned")
            .iter()
            .filter(|r| r.path.ends_with(suffix))
            .count()
    }

    pub fn clear_log(&self) {
        self.state.log.lock().expect("log poisoned").clear();
    }

    /// Serves until the task is aborted or shutdown is requested.
    pub async fn wait(mut self) {
        if let Some(t) = self.task.take() {
            let _ = t.await;
        }
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.task.take() {
            let _ = t.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody::new(code, message))).into_response()
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Some(b) = std::str::from_utf8(&bytes[i + 1..i + 3])
                .ok()
                .and_then(|h| u8::from_str_radix(h, 16).ok())
            {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

async fn handle(State(st): State<Arc<MockState>>, method: Method, uri: Uri, body: Bytes) -> Response {
    let path = uri.path().to_string();
    let parsed: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    st.log.lock().expect("log poisoned").push(LoggedRequest {
        path: path.clone(),
        body: parsed.clone(),
    });
    if let Some(d) = st.options.latency {
        tokio::time::sleep(d).await;
    }
    if method != Method::POST {
        return error(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "use POST");
    }
    let Some(pos) = path.rfind("/v1/") else {
        return error(StatusCode::NOT_FOUND, "not_found", format!("no route for {path}"));
    };
    let prefix = percent_decode(path[..pos].trim_matches('/'));
    let endpoint = &path[pos..];
    if parsed.is_null() && endpoint != HEALTH_PATH {
        return error(StatusCode::BAD_REQUEST, "bad_request", "body must be JSON");
    }
    match endpoint {
        CAPTION_PATH => caption(&st, &prefix, parsed),
        ANSWER_PATH => answer(&st, &prefix, parsed),
        COMPLETE_PATH => complete(&st, &prefix, parsed),
        EMBED_PATH => embed(parsed),
        HEALTH_PATH => Json(HealthResponse {
            ok: true,
            roles: vec![Role::Expert, Role::Coordinator, Role::Embedder],
        })
        .into_response(),
        _ => error(StatusCode::NOT_FOUND, "not_found", format!("no route for {path}")),
    }
}

#[allow(clippy::result_large_err)]
fn resolve_expert<'a>(st: &'a MockState, prefix: &str) -> std::result::Result<&'a str, Response> {
    let experts = st.fixtures.experts();
    if prefix.is_empty() {
        return match experts {
            [only] => Ok(only.as_str()),
            _ => Err(error(
                StatusCode::BAD_REQUEST,
                "expert_not_specified",
                "several experts are served; prefix the path with the expert name",
            )),
        };
    }
    experts
        .iter()
        .find(|e| *e == prefix)
        .map(|e| e.as_str())
        .ok_or_else(|| {
            error(
                StatusCode::NOT_FOUND,
                "unknown_expert",
                format!("unknown expert `{prefix}`"),
            )
        })
}

fn caption(st: &MockState, prefix: &str, body: Value) -> Response {
    let expert = match resolve_expert(st, prefix) {
        Ok(e) => e,
        Err(r) => return r,
    };
    let req: CaptionRequest = match serde_json::from_value(body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    };
    match st.fixtures.captions.get(&(expert.to_string(), req.image.value.clone())) {
        Some(c) => Json(CaptionResponse { caption: c.clone() }).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown_image", "unknown image"),
    }
}

fn answer(st: &MockState, prefix: &str, body: Value) -> Response {
    let expert = match resolve_expert(st, prefix) {
        Ok(e) => e,
        Err(r) => return r,
    };
    let req: AnswerRequest = match serde_json::from_value(body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    };
    let key = (expert.to_string(), req.image.value.clone(), req.question.clone());
    if let Some(a) = st.fixtures.answers.get(&key) {
        return Json(AnswerResponse { answer: a.clone() }).into_response();
    }
    let image_known = st
        .fixtures
        .answers
        .keys()
        .any(|(e, i, _)| e == expert && *i == req.image.value);
    if image_known {
        error(StatusCode::NOT_FOUND, "unknown_question", "unknown question")
    } else {
        error(StatusCode::NOT_FOUND, "unknown_image", "unknown image")
    }
}

fn complete(st: &MockState, prefix: &str, body: Value) -> Response {
    let req: CompleteRequest = match serde_json::from_value(body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    };
    if req.prompt.is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty_prompt", "prompt must be non-empty");
    }
    let mode = if prefix.is_empty() {
        st.options.mode.clone()
    } else {
        match prefix.parse::<CompletionMode>() {
            Ok(m) => m,
            Err(e) => return error(StatusCode::NOT_FOUND, "unknown_mode", e.to_string()),
        }
    };
    let text = match &mode {
        CompletionMode::Fixed(v) => v.clone(),
        CompletionMode::EchoExpert(name) => {
            let label = format!("{name}'s answer:");
            req.prompt
                .lines()
                .rev()
                .find_map(|l| l.strip_prefix(&label))
                .map(|rest| rest.trim_start().to_string())
                .unwrap_or_default()
        }
        CompletionMode::Oracle => {
            let q = req.prompt.lines().rev().find(|l| l.starts_with("Q:"));
            match q.and_then(|q| st.fixtures.oracle.get(q)) {
                Some(g) => g.clone(),
                None => {
                    return error(
                        StatusCode::NOT_FOUND,
                        "unknown_prompt",
                        "no sidecar record matches this prompt",
                    )
                }
            }
        }
        CompletionMode::Fixtures => match st.fixtures.completions.get(&req.prompt) {
            Some(c) => c.clone(),
            None => {
                return error(
                    StatusCode::NOT_FOUND,
                    "unknown_prompt",
                    "prompt not in completions fixture",
                )
            }
        },
    };
    let words: Vec<&str> = text.split_whitespace().collect();
    let limit = req.max_new_tokens as usize;
    let (completion, truncated) = if words.len() > limit {
        (words[..limit].join(" "), Some(true))
    } else {
        (text, None)
    };
    Json(CompleteResponse { completion, truncated }).into_response()
}

fn embed(body: Value) -> Response {
    let req: EmbedRequest = match serde_json::from_value(body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    };
    if req.texts.is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty_batch", "texts must be non-empty");
    }
    let vectors = req.texts.iter().map(|t| fallback_embed(t).values().to_vec()).collect();
    Json(EmbedResponse {
        vectors,
        dim: FALLBACK_DIM,
    })
    .into_response()
}
