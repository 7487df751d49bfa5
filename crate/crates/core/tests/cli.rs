//! The `vlmc` binary against an in-process mock.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use vlmc::evalharness::read_report;

async fn vlmc(args: Vec<String>) -> Output {
    tokio::task::spawn_blocking(move || {
        Command::new(env!("CARGO_BIN_EXE_vlmc"))
            .args(&args)
            .env_remove("VLMC_CACHE_DIR")
            .output()
            .expect("binary runs")
    })
    .await
    .unwrap()
}

fn args(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[tokio::test(flavor = "multi_thread")]
async fn run_writes_reports_and_overrides_apply() {
    let server = common::start_mock().await;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config_value(&server, "VQA_MC", "cola_zero", "oracle", &dir.path().join("cache"));
    cfg["limit"] = 5.into();
    let path = write_config(dir.path(), &cfg);

    let mut fingerprints = Vec::new();
    for out in ["a", "b"] {
        let out = dir.path().join(out);
        let o = vlmc(args(&[
            "run",
            "-c",
            path.to_str().unwrap(),
            "--set",
            "seed=7",
            "--out",
            out.to_str().unwrap(),
        ]))
        .await;
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("| 100.0 |"));
        for f in ["report.json", "report.md", "timing.json"] {
            assert!(out.join(f).is_file(), "{f}");
        }
        fingerprints.push(read_report(&out.join("report.json")).unwrap().config_fingerprint);
    }
    assert_eq!(fingerprints[0], fingerprints[1]);

    let o = vlmc(args(&[
        "run",
        "-c",
        path.to_str().unwrap(),
        "--set",
        "seed=8",
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]))
    .await;
    assert!(o.status.success());
    assert_ne!(
        read_report(&dir.path().join("c/report.json"))
            .unwrap()
            .config_fingerprint,
        fingerprints[0]
    );

    let reports: Vec<String> = ["a", "c"]
        .iter()
        .map(|d| dir.path().join(d).join("report.json").display().to_string())
        .collect();
    let o = vlmc([vec!["report".to_string()], reports].concat()).await;
    assert!(o.status.success());
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(table.lines().filter(|l| l.starts_with("| ")).count(), 3, "{table}");
}

#[tokio::test(flavor = "multi_thread")]
async fn configuration_errors_exit_2_before_any_request() {
    let server = common::start_mock().await;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config_value(&server, "VQA_MC", "cola_zero", "oracle", &dir.path().join("cache"));
    cfg.as_object_mut().unwrap().remove("coordinator");
    let path = write_config(dir.path(), &cfg);
    let o = vlmc(args(&["run", "-c", path.to_str().unwrap()])).await;
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coordinator"), "{}", stderr(&o));

    let o = vlmc(args(&["run", "-c", path.to_str().unwrap(), "--set", "no_such_key=1"])).await;
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_key"), "{}", stderr(&o));

    assert!(server.requests().is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_backend_exits_3() {
    let server = common::start_mock().await;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config_value(&server, "VQA_MC", "single:OFA", "oracle", &dir.path().join("cache"));
    cfg["panel"][0]["base_url"] = "http://127.0.0.1:9".into();
    cfg["panel"][0]["max_retries"] = 0.into();
    let path = write_config(dir.path(), &cfg);
    let o = vlmc(args(&["run", "-c", path.to_str().unwrap()])).await;
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[tokio::test(flavor = "multi_thread")]
async fn validate_data_reports_bad_rows_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let good = common::mini("mc_val.jsonl");
    let manifest = dir.path().join("manifest.json");
    std::fs::write(
        &manifest,
        serde_json::json!({"name": "custom", "family": "VQA_MC", "paths": {"val": good}}).to_string(),
    )
    .unwrap();
    let o = vlmc(args(&["validate-data", "--manifest", manifest.to_str().unwrap()])).await;
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("val: 50 rows, 50 kept"));

    let bad = dir.path().join("bad.jsonl");
    let line = std::fs::read_to_string(&good)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(&bad, format!("{line}\n{{not json\n")).unwrap();
    std::fs::write(
        &manifest,
        serde_json::json!({"name": "custom", "family": "VQA_MC", "paths": {"val": bad}}).to_string(),
    )
    .unwrap();
    let o = vlmc(args(&["validate-data", "--manifest", manifest.to_str().unwrap()])).await;
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[tokio::test(flavor = "multi_thread")]
async fn export_and_ablate_write_their_artifacts() {
    let server = common::start_mock().await;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config_value(&server, "VQA_MC", "cola_zero", "oracle", &dir.path().join("cache"));
    cfg["limit"] = 10.into();
    let path = write_config(dir.path(), &cfg);

    let tuning = dir.path().join("tuning.jsonl");
    let o = vlmc(args(&[
        "export-tuning",
        "-c",
        path.to_str().unwrap(),
        "--out",
        tuning.to_str().unwrap(),
    ]))
    .await;
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("97 pairs, 3 skipped"));
    assert_eq!(std::fs::read_to_string(&tuning).unwrap().lines().count(), 98);

    let out = dir.path().join("ablation");
    let o = vlmc(args(&[
        "ablate",
        "-c",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]))
    .await;
    assert!(o.status.success(), "{}", stderr(&o));
    let md = std::fs::read_to_string(out.join("ablation.md")).unwrap();
    assert_eq!(
        md.lines()
            .filter(|l| l.starts_with("| ") && !l.starts_with("| row"))
            .count(),
        8,
        "{md}"
    );
    assert!(out.join("baseline/report.json").is_file());
    assert!(out.join("swap-answers-eval/tuning.jsonl").is_file());
}

#[tokio::test]
async fn help_and_bad_arguments() {
    let o = vlmc(args(&["--help"])).await;
    assert!(o.status.success());
    let o = vlmc(args(&["run"])).await;
    assert_eq!(o.status.code(), Some(2));
}
