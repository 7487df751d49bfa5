//! The C ABI exercised through its Rust signatures.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use serde_json::{json, Value};
use vlmc::backends::{fallback_embed, MockFixtures, MockOptions, MockServer};
use vlmc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Take ownership of a returned string.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    vlmc_string_free(p);
    s
}

fn last_error() -> String {
    let p = vlmc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

#[test]
fn normalize_and_transform() {
    let mut out = ptr::null_mut();
    let text = c("  The Man,  riding!");
    assert_eq!(unsafe { vlmc_normalize_text(text.as_ptr(), &mut out) }, VlmcStatus::Ok);
    assert_eq!(
        unsafe { take(out) },
        vlmc::normalize_text("  The Man,  riding!").into_string()
    );
    assert!(vlmc_last_error().is_null());

    let (fam, q) = (c("ENTAILMENT"), c("A dog sleeps."));
    assert_eq!(
        unsafe { vlmc_transform_question(fam.as_ptr(), q.as_ptr(), &mut out) },
        VlmcStatus::Ok
    );
    assert_eq!(
        unsafe { take(out) },
        vlmc::promptkit::transform_question(vlmc::TaskFamily::Entailment, "A dog sleeps.")
    );

    let bad = c("NOT_A_FAMILY");
    assert_eq!(
        unsafe { vlmc_transform_question(bad.as_ptr(), q.as_ptr(), &mut out) },
        VlmcStatus::Usage
    );
    assert!(last_error().contains("NOT_A_FAMILY"));
}

#[test]
fn null_and_invalid_arguments_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { vlmc_normalize_text(ptr::null(), &mut out) },
        VlmcStatus::NullArgument
    );
    assert!(last_error().contains("`text`"));
    assert!(out.is_null());
    let text = c("x");
    assert_eq!(
        unsafe { vlmc_normalize_text(text.as_ptr(), ptr::null_mut()) },
        VlmcStatus::NullArgument
    );
    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { vlmc_normalize_text(invalid.as_ptr().cast(), &mut out) },
        VlmcStatus::InvalidUtf8
    );
    unsafe {
        vlmc_string_free(ptr::null_mut());
        vlmc_embedder_free(ptr::null_mut());
        vlmc_harness_free(ptr::null_mut());
    }
}

#[test]
fn prompts_match_the_golden_files() {
    let dir = core_fixtures().join("golden");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let Some(name) = path.file_name().unwrap().to_str().unwrap().strip_suffix(".input.json") else {
            continue;
        };
        let request = c(&std::fs::read_to_string(&path).unwrap());
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { vlmc_build_prompt(request.as_ptr(), &mut out) },
            VlmcStatus::Ok,
            "{name}"
        );
        let expected = std::fs::read_to_string(dir.join(format!("{name}.txt"))).unwrap();
        assert_eq!(unsafe { take(out) }, expected, "{name}");
        seen += 1;
    }
    assert_eq!(seen, 5);

    let request = c(r#"{"family": "VQA_MC", "expert_names": [], "question": "q", "outputs": []}"#);
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { vlmc_build_prompt(request.as_ptr(), &mut out) },
        VlmcStatus::Usage
    );
    let request = c("{");
    assert_eq!(
        unsafe { vlmc_build_prompt(request.as_ptr(), &mut out) },
        VlmcStatus::Usage
    );
    assert!(last_error().starts_with("invalid JSON"));
}

#[test]
fn scores_and_similarity() {
    let mut score = f64::NAN;
    let (pred, golds) = (c("The horse"), c(r#"["horse", "horse", "pony", "horse", "horse"]"#));
    assert_eq!(
        unsafe { vlmc_da_accuracy(pred.as_ptr(), golds.as_ptr(), &mut score) },
        VlmcStatus::Ok
    );
    assert_eq!(score, 1.0);
    let pony = c("pony");
    assert_eq!(
        unsafe { vlmc_da_accuracy(pony.as_ptr(), golds.as_ptr(), &mut score) },
        VlmcStatus::Ok
    );
    assert!((score - 1.0 / 3.0).abs() < 1e-15);

    let (a, b) = ([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]);
    assert_eq!(
        unsafe { vlmc_cosine(a.as_ptr(), b.as_ptr(), 3, &mut score) },
        VlmcStatus::Ok
    );
    assert!((score - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    let zero = [0.0; 3];
    assert_eq!(
        unsafe { vlmc_cosine(a.as_ptr(), zero.as_ptr(), 3, &mut score) },
        VlmcStatus::Degenerate
    );
}

#[test]
fn builtin_embedder_round_trip() {
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { vlmc_embedder_new(ptr::null(), &mut e) }, VlmcStatus::Ok);
    let text = c("no parking");
    let mut dim = 0usize;
    assert_eq!(
        unsafe { vlmc_embed(e, text.as_ptr(), ptr::null_mut(), 0, &mut dim) },
        VlmcStatus::Ok
    );
    let expected = fallback_embed("no parking");
    assert_eq!(dim, expected.dim());
    let mut buf = vec![0.0; dim];
    assert_eq!(
        unsafe { vlmc_embed(e, text.as_ptr(), buf.as_mut_ptr(), dim, &mut dim) },
        VlmcStatus::Ok
    );
    assert_eq!(buf, expected.values());

    let mut out = ptr::null_mut();
    let (completion, choices) = (c("parking lot"), c(r#"["kayaking", "parking", "no parking"]"#));
    assert_eq!(
        unsafe { vlmc_map_to_choice(e, completion.as_ptr(), choices.as_ptr(), &mut out) },
        VlmcStatus::Ok
    );
    let mapped: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(mapped["pick"]["text"], "parking");
    assert_eq!(mapped["degenerate"], false);

    let blank = c("   ");
    assert_eq!(
        unsafe { vlmc_map_to_choice(e, blank.as_ptr(), choices.as_ptr(), &mut out) },
        VlmcStatus::Ok
    );
    let mapped: Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(
        (mapped["degenerate"].clone(), mapped["pick"]["index"].clone()),
        (json!(true), json!(0))
    );

    let empty = c("[]");
    assert_eq!(
        unsafe { vlmc_map_to_choice(e, text.as_ptr(), empty.as_ptr(), &mut out) },
        VlmcStatus::Usage
    );
    unsafe { vlmc_embedder_free(e) };
}

fn mock_config(server: &MockServer, cache: &Path) -> Value {
    let mini = core_fixtures().join("mini");
    json!({
        "dataset": {"name": "custom", "family": "VQA_MC", "paths": {"val": mini.join("mc_val.jsonl")}},
        "panel": [
            {"name": "OFA", "base_url": server.expert_url("OFA"), "role": "expert"},
            {"name": "BLIP", "base_url": server.expert_url("BLIP"), "role": "expert"}
        ],
        "coordinator": {"name": "coord-oracle", "base_url": server.coordinator_url(Some("oracle")), "role": "coordinator"},
        "mode": "cola_zero",
        "seed": 5,
        "limit": 8,
        "cache_dir": cache,
    })
}

#[test]
fn harness_runs_against_the_mock() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let fixtures = MockFixtures::load(&core_fixtures().join("mini/mock")).unwrap();
    let server = rt
        .block_on(MockServer::start(fixtures, MockOptions::default(), 0))
        .unwrap();
    let cache = tempfile::tempdir().unwrap();

    let config = c(&mock_config(&server, cache.path()).to_string());
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vlmc_harness_new(config.as_ptr(), ptr::null(), &mut h) },
        VlmcStatus::Ok
    );
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vlmc_harness_fingerprint(h, &mut out) }, VlmcStatus::Ok);
    let fp = unsafe { take(out) };
    assert_eq!(fp.len(), 64);

    assert_eq!(unsafe { vlmc_harness_run(h, &mut out) }, VlmcStatus::Ok);
    let report: vlmc::evalharness::RunReport = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(report.config_fingerprint.hex(), fp);
    assert_eq!(report.per_instance.len(), 8);
    assert_eq!(report.metrics.mc_accuracy, Some(1.0));
    unsafe { vlmc_harness_free(h) };

    // A missing coordinator is caught before any request.
    let mut cfg = mock_config(&server, cache.path());
    cfg.as_object_mut().unwrap().remove("coordinator");
    let before = server.requests().len();
    let config = c(&cfg.to_string());
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vlmc_harness_new(config.as_ptr(), ptr::null(), &mut h) },
        VlmcStatus::Usage
    );
    assert!(h.is_null());
    assert!(last_error().contains("coordinator"));
    assert_eq!(server.requests().len(), before);

    // Unreachable experts surface as transport failures.
    let mut cfg = mock_config(&server, cache.path());
    cfg["panel"][0]["base_url"] = "http://127.0.0.1:9".into();
    cfg["panel"][0]["max_retries"] = 0.into();
    let config = c(&cfg.to_string());
    assert_eq!(
        unsafe { vlmc_harness_new(config.as_ptr(), ptr::null(), &mut h) },
        VlmcStatus::Ok
    );
    assert_eq!(unsafe { vlmc_harness_run(h, &mut out) }, VlmcStatus::Transport);
    unsafe { vlmc_harness_free(h) };
}

#[test]
fn relative_paths_resolve_against_base_dir() {
    let cfg = json!({
        "dataset": {"name": "custom", "family": "ENTAILMENT", "paths": {"val": "mini/ent_val.jsonl"}},
        "panel": [{"name": "OFA", "base_url": "http://127.0.0.1:9/OFA", "role": "expert"}],
        "mode": "single:OFA",
        "seed": 1
    });
    let config = c(&cfg.to_string());
    let base = c(core_fixtures().to_str().unwrap());
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vlmc_harness_new(config.as_ptr(), base.as_ptr(), &mut h) },
        VlmcStatus::Ok
    );
    unsafe { vlmc_harness_free(h) };
    let elsewhere = c("/nonexistent");
    assert_eq!(
        unsafe { vlmc_harness_new(config.as_ptr(), elsewhere.as_ptr(), &mut h) },
        VlmcStatus::Parse
    );
    assert!(
        last_error().contains("/nonexistent/mini/ent_val.jsonl"),
        "{}",
        last_error()
    );
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vlmc.h")).unwrap();
    for f in [
        "vlmc_last_error",
        "vlmc_string_free",
        "vlmc_version",
        "vlmc_normalize_text",
        "vlmc_transform_question",
        "vlmc_build_prompt",
        "vlmc_da_accuracy",
        "vlmc_cosine",
        "vlmc_embedder_new",
        "vlmc_embedder_free",
        "vlmc_embed",
        "vlmc_map_to_choice",
        "vlmc_harness_new",
        "vlmc_harness_free",
        "vlmc_harness_fingerprint",
        "vlmc_harness_run",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f}");
    }
    assert!(header.contains("VLMC_STATUS_TRANSPORT = 4"));
    assert_eq!(
        unsafe { CStr::from_ptr(vlmc_version()) }.to_str().unwrap(),
        env!("CARGO_PKG_VERSION")
    );
}
