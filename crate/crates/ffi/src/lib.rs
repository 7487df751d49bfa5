//! C ABI for the vlmc harness.
//!
//! Conventions:
//! - Every fallible function returns a [`VlmcStatus`]; results come back
//!   through out-pointers that are written only on `VLMC_STATUS_OK`.
//! - Strings are NUL-terminated UTF-8. Strings returned by the library are
//!   owned by the caller and released with [`vlmc_string_free`].
//! - Structured inputs and outputs are JSON, using the same shapes as the
//!   Rust types (`RunConfig`, `ExpertOutput`, `RunReport`, ...).
//! - After a failure, [`vlmc_last_error`] describes it. The message belongs
//!   to the calling thread and stays valid until that thread's next call.
//! - Handles are opaque. Free each exactly once with its `_free` function;
//!   freeing NULL is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::Deserialize;
use vlmc::backends::{BackendClient, BackendHandle, EmbeddingVector};
use vlmc::evalharness::{da_accuracy, Harness, RunConfig};
use vlmc::mapping::{cosine, map_to_choice};
use vlmc::promptkit::{build_prompt, transform_question, Exemplar, PromptTemplate};
use vlmc::{normalize_text, Error, ExpertOutput, InstanceRecord, TaskFamily};

/// Outcome of a library call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlmcStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad configuration, arguments or JSON input.
    Usage = 3,
    /// A backend was unreachable after retries.
    Transport = 4,
    /// A backend answered with an error or an unreadable body.
    Protocol = 5,
    /// The dataset failed validation.
    Validation = 6,
    /// A dataset file could not be parsed.
    Parse = 7,
    /// An input normalized to nothing where text was required.
    Degenerate = 8,
    Io = 9,
    /// The library panicked; the handle involved should be freed.
    Panic = 10,
}

impl From<&Error> for VlmcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Usage(_) | Error::Json(_) => VlmcStatus::Usage,
            Error::Transport { .. } => VlmcStatus::Transport,
            Error::Protocol { .. } => VlmcStatus::Protocol,
            Error::Validation(_) => VlmcStatus::Validation,
            Error::Parse { .. } => VlmcStatus::Parse,
            Error::Degenerate(_) => VlmcStatus::Degenerate,
            Error::Io(_) => VlmcStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(VlmcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(VlmcStatus::from(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(VlmcStatus::Usage, format!("invalid JSON: {e}"))
    }
}

/// Run `f`, translating errors and panics into a status and last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VlmcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VlmcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            VlmcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(VlmcStatus::NullArgument, format!("`{name}` is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VlmcStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(VlmcStatus::NullArgument, format!("`{name}` is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(VlmcStatus::Usage, "result contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure(VlmcStatus::Io, format!("cannot start runtime: {e}")))
}

/// Description of the last failure on this thread, or NULL if the last call
/// succeeded. Do not free the returned pointer.
#[no_mangle]
pub extern "C" fn vlmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vlmc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string. Do not free.
#[no_mangle]
pub extern "C" fn vlmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Normalize text the way answers and choices are compared.
///
/// # Safety
/// `text` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_normalize_text(text: *const c_char, out: *mut *mut c_char) -> VlmcStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        non_null(out, "out")?;
        write_string(out, normalize_text(text).into_string())
    })
}

/// Rewrite a raw question for a task family (`"VQA_MC"`, `"ENTAILMENT"`, ...).
///
/// # Safety
/// `family` and `question` must be valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_transform_question(
    family: *const c_char,
    question: *const c_char,
    out: *mut *mut c_char,
) -> VlmcStatus {
    guard(|| {
        let family: TaskFamily = serde_json::from_value(str_arg(family, "family")?.into())?;
        let question = str_arg(question, "question")?;
        non_null(out, "out")?;
        write_string(out, transform_question(family, question))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptRequest {
    family: TaskFamily,
    expert_names: Vec<String>,
    /// Raw question; transformed for the family before rendering.
    question: String,
    #[serde(default)]
    choices: Vec<String>,
    outputs: Vec<ExpertOutput>,
    #[serde(default)]
    exemplars: Vec<ExemplarRequest>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExemplarRequest {
    record: InstanceRecord,
    outputs: Vec<ExpertOutput>,
}

/// Render a coordinator prompt.
///
/// `request_json` is an object with `family`, `expert_names`, `question`,
/// `choices`, `outputs` (one `ExpertOutput` per expert, in panel order) and
/// optional `exemplars` (`{"record": ..., "outputs": [...]}`).
///
/// # Safety
/// `request_json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_build_prompt(request_json: *const c_char, out: *mut *mut c_char) -> VlmcStatus {
    guard(|| {
        let req: PromptRequest = serde_json::from_str(str_arg(request_json, "request_json")?)?;
        non_null(out, "out")?;
        let exemplars = req
            .exemplars
            .into_iter()
            .map(|e| Exemplar::new(e.record, e.outputs))
            .collect::<vlmc::Result<Vec<_>>>()?;
        let tpl = PromptTemplate::new(req.family, req.expert_names);
        let query = transform_question(req.family, &req.question);
        let prompt = build_prompt(&tpl, &req.outputs, &query, &req.choices, &exemplars)?;
        write_string(out, prompt.into_string())
    })
}

/// Soft direct-answer score: `min(matching annotators / 3, 1)`.
///
/// # Safety
/// `prediction` and `gold_answers_json` (a JSON array of strings) must be
/// valid C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_da_accuracy(
    prediction: *const c_char,
    gold_answers_json: *const c_char,
    out: *mut f64,
) -> VlmcStatus {
    guard(|| {
        let prediction = str_arg(prediction, "prediction")?;
        let golds: Vec<String> = serde_json::from_str(str_arg(gold_answers_json, "gold_answers_json")?)?;
        non_null(out, "out")?;
        *out = da_accuracy(prediction, &golds);
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_cosine(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> VlmcStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        let u = EmbeddingVector::new(std::slice::from_raw_parts(a, len).to_vec())?;
        let v = EmbeddingVector::new(std::slice::from_raw_parts(b, len).to_vec())?;
        *out = cosine(&u, &v)?;
        Ok(())
    })
}

/// An embedding backend plus the runtime that drives it.
pub struct VlmcEmbedder {
    client: BackendClient,
    rt: tokio::runtime::Runtime,
}

/// Create an embedder. `handle_json` is a backend handle
/// (`{"name", "base_url", "role": "embedder", ...}`) or NULL for the
/// built-in in-process embedder.
///
/// # Safety
/// `handle_json` must be NULL or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_embedder_new(handle_json: *const c_char, out: *mut *mut VlmcEmbedder) -> VlmcStatus {
    guard(|| {
        non_null(out, "out")?;
        let handle: BackendHandle = if handle_json.is_null() {
            BackendHandle::builtin_embedder()
        } else {
            serde_json::from_str(str_arg(handle_json, "handle_json")?)?
        };
        let client = BackendClient::new(handle)?;
        *out = Box::into_raw(Box::new(VlmcEmbedder { client, rt: runtime()? }));
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a handle from [`vlmc_embedder_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vlmc_embedder_free(e: *mut VlmcEmbedder) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Embed one text. Writes up to `cap` values into `out` and the full
/// dimension into `out_len`; call with `cap = 0` to query the dimension.
///
/// # Safety
/// `e` must be a live handle, `text` a valid C string, `out` writable for
/// `cap` doubles (may be NULL when `cap` is 0) and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_embed(
    e: *const VlmcEmbedder,
    text: *const c_char,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> VlmcStatus {
    guard(|| {
        non_null(e, "embedder")?;
        let text = str_arg(text, "text")?;
        non_null(out_len, "out_len")?;
        if cap > 0 {
            non_null(out, "out")?;
        }
        let e = &*e;
        let mut vecs = e.rt.block_on(e.client.embed_texts(&[text.to_string()]))?;
        let v = vecs.pop().ok_or_else(|| Error::usage("embedder returned no vector"))?;
        let n = v.dim().min(cap);
        if n > 0 {
            std::slice::from_raw_parts_mut(out, n).copy_from_slice(&v.values()[..n]);
        }
        *out_len = v.dim();
        Ok(())
    })
}

/// Map a free-text completion onto a choice set (a JSON array of strings).
/// The result is a JSON object with `distribution`, `pick`, `degenerate`
/// and `exact_match`.
///
/// # Safety
/// `e` must be a live handle, `completion` and `choices_json` valid C
/// strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_map_to_choice(
    e: *const VlmcEmbedder,
    completion: *const c_char,
    choices_json: *const c_char,
    out: *mut *mut c_char,
) -> VlmcStatus {
    guard(|| {
        non_null(e, "embedder")?;
        let completion = str_arg(completion, "completion")?;
        let choices: Vec<String> = serde_json::from_str(str_arg(choices_json, "choices_json")?)?;
        non_null(out, "out")?;
        let e = &*e;
        let mapped = e.rt.block_on(map_to_choice(completion, &choices, &e.client, "ffi"))?;
        write_string(out, serde_json::to_string(&mapped)?)
    })
}

/// A validated run configuration with its dataset loaded.
pub struct VlmcHarness {
    harness: Harness,
    rt: tokio::runtime::Runtime,
}

/// Load a run configuration (JSON) and ingest its dataset. Relative dataset
/// and cache paths resolve against `base_dir`, or the working directory
/// when it is NULL. Nothing touches the network here.
///
/// # Safety
/// `config_json` must be a valid C string, `base_dir` NULL or a valid C
/// string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_harness_new(
    config_json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut VlmcHarness,
) -> VlmcStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        non_null(out, "out")?;
        let mut cfg = RunConfig::from_json_str(text, &[])?;
        if !base_dir.is_null() {
            let base = std::path::Path::new(str_arg(base_dir, "base_dir")?);
            cfg.dataset.resolve_paths(base);
            if let Some(dir) = cfg.cache_dir.as_mut().filter(|d| d.is_relative()) {
                *dir = base.join(&*dir);
            }
        }
        let rt = runtime()?;
        // Client construction needs a runtime context.
        let harness = {
            let _enter = rt.enter();
            Harness::new(cfg)?
        };
        *out = Box::into_raw(Box::new(VlmcHarness { harness, rt }));
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a handle from [`vlmc_harness_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vlmc_harness_free(h: *mut VlmcHarness) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Configuration fingerprint as 64 hex characters.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_harness_fingerprint(h: *const VlmcHarness, out: *mut *mut c_char) -> VlmcStatus {
    guard(|| {
        non_null(h, "harness")?;
        non_null(out, "out")?;
        write_string(out, (*h).harness.fingerprint().hex())
    })
}

/// Health-check the backends, evaluate, and return the report as JSON.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vlmc_harness_run(h: *const VlmcHarness, out: *mut *mut c_char) -> VlmcStatus {
    guard(|| {
        non_null(h, "harness")?;
        non_null(out, "out")?;
        let h = &*h;
        let report = h.rt.block_on(async {
            h.harness.check_health().await?;
            h.harness.run().await
        })?;
        write_string(out, report.report.to_json())
    })
}
