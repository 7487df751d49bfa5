#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use vlmc::backends::{MockFixtures, MockOptions, MockServer};
use vlmc::evalharness::RunConfig;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn mini(file: &str) -> PathBuf {
    fixtures().join("mini").join(file)
}

pub async fn start_mock() -> MockServer {
    start_mock_with(MockOptions::default()).await
}

pub async fn start_mock_with(options: MockOptions) -> MockServer {
    let fx = MockFixtures::load(&fixtures().join("mini").join("mock")).expect("mock fixtures load");
    MockServer::start(fx, options, 0).await.expect("mock starts")
}

/// Coordinator handle for a completion mode served under a path prefix.
/// The name is derived from the mode so cache entries never collide.
pub fn coordinator(server: &MockServer, mode: &str) -> Value {
    let name = format!("coord-{}", mode.replace([':', '"', ' '], "-"));
    json!({"name": name, "base_url": server.coordinator_url(Some(mode)), "role": "coordinator"})
}

pub fn expert(server: &MockServer, name: &str) -> Value {
    json!({"name": name, "base_url": server.expert_url(name), "role": "expert"})
}

/// Run config over the mini fixture. `family` selects the split files:
/// VQA_MC → mc_*, ENTAILMENT → ent_*, VQA_DA → da_val only.
pub fn config_value(server: &MockServer, family: &str, mode: &str, coord_mode: &str, cache: &Path) -> Value {
    let paths = match family {
        "VQA_MC" => json!({"val": mini("mc_val.jsonl"), "train": mini("mc_train.jsonl")}),
        "ENTAILMENT" => json!({"val": mini("ent_val.jsonl"), "train": mini("ent_train.jsonl")}),
        "VQA_DA" => json!({"val": mini("da_val.jsonl")}),
        other => panic!("no fixture for {other}"),
    };
    json!({
        "dataset": {"name": "custom", "family": family, "paths": paths},
        "panel": [expert(server, "OFA"), expert(server, "BLIP")],
        "coordinator": coordinator(server, coord_mode),
        "mode": mode,
        "seed": 11,
        "cache_dir": cache,
    })
}

pub fn config(server: &MockServer, family: &str, mode: &str, coord_mode: &str, cache: &Path) -> RunConfig {
    serde_json::from_value(config_value(server, family, mode, coord_mode, cache)).expect("config parses")
}

pub fn mock_embedder(server: &MockServer) -> vlmc::backends::BackendHandle {
    vlmc::backends::BackendHandle::new("mock-embed", server.url(), vlmc::backends::Role::Embedder)
}
