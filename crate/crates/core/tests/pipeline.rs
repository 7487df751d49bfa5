//! End-to-end runs over the mini fixture.

mod common;

use std::io::Write;

use vlmc::evalharness::{compute_metrics, render_markdown, Harness, RowStatus, RunConfig, RunMode, RunReport};
use vlmc::{Error, Split};

async fn run(cfg: RunConfig) -> RunReport {
    let h = Harness::new(cfg).unwrap();
    h.check_health().await.unwrap();
    h.run().await.unwrap().report
}

#[tokio::test(flavor = "multi_thread")]
async fn direct_answer_modes_score_with_the_soft_metric() {
    let server = common::start_mock().await;
    let cache = tempfile::tempdir().unwrap();
    for mode in ["single:OFA", "ensemble_vote", "ensemble_avg", "cola_zero"] {
        let r = run(common::config(&server, "VQA_DA", mode, "oracle", cache.path())).await;
        assert_eq!(r.metrics.n_evaluated, 12, "{mode}");
        assert!(r.metrics.mc_accuracy.is_none(), "{mode}");
        let da = r.metrics.da_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&da), "{mode}: {da}");
        assert!(r.per_instance.iter().all(|t| t.pick.is_none() && t.da_score.is_some()));
        if mode == "cola_zero" {
            // The oracle answers with the most frequent annotation, which
            // always has at least two matching annotators in this fixture.
            assert!(r.per_instance.iter().all(|t| t.da_score.unwrap() >= 2.0 / 3.0));
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn k_shot_prompts_carry_training_exemplars() {
    let server = common::start_mock().await;
    let cache = tempfile::tempdir().unwrap();
    let mut cfg = common::config(&server, "VQA_MC", "cola_zero.k=2", "oracle", cache.path());
    cfg.limit = Some(10);
    let r = run(cfg).await;
    assert_eq!(r.k, Some(2));
    assert_eq!(r.per_instance.len(), 10);
    let train = vlmc::datasets::read_canonical_jsonl(&common::mini("mc_train.jsonl")).unwrap();
    for t in &r.per_instance {
        if t.status == RowStatus::Evaluated {
            assert_eq!(t.exemplar_ids.len(), 2);
            assert!(t
                .exemplar_ids
                .iter()
                .all(|id| train.iter().any(|r| &r.id == id && r.split == Split::Train)));
            assert_eq!(t.correct, Some(true));
        } else {
            // Only exemplars drawn from the three unseen training images fail.
            assert_eq!(t.errors[0].kind, "protocol");
        }
    }
    assert!(r.metrics.n_evaluated >= 7);

    // The oracle looks only at the final question, so the 2-shot prompt
    // ends with the zero-shot prompt for the same item.
    let h = Harness::new(common::config(
        &server,
        "VQA_MC",
        "cola_zero.k=2",
        "oracle",
        cache.path(),
    ))
    .unwrap();
    let zero = Harness::new(common::config(&server, "VQA_MC", "cola_zero", "oracle", cache.path())).unwrap();
    let first = &h.eval_records()[0];
    let mut zr = zero.run().await.unwrap().report;
    zr.per_instance.truncate(1);
    assert!(zr.per_instance[0].exemplar_ids.is_empty());
    assert_eq!(first.id, zr.per_instance[0].id);
}

#[tokio::test(flavor = "multi_thread")]
async fn failing_instances_are_skipped_not_fatal() {
    let server = common::start_mock().await;
    let cache = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let val = dir.path().join("val.jsonl");
    let mut f = std::fs::File::create(&val).unwrap();
    let src = std::fs::read_to_string(common::mini("mc_val.jsonl")).unwrap();
    for line in src.lines().take(4) {
        writeln!(f, "{line}").unwrap();
    }
    writeln!(
        f,
        "{}",
        src.lines()
            .next()
            .unwrap()
            .replace("mc_val_000", "ghost")
            .replace("img_mcval_0000", "img_ghost")
    )
    .unwrap();
    drop(f);

    let mut cfg = common::config(&server, "VQA_MC", "ensemble_vote", "oracle", cache.path());
    cfg.dataset.paths.insert(Split::Val, val);
    let r = run(cfg).await;
    assert_eq!((r.metrics.n_evaluated, r.metrics.n_skipped), (4, 1));
    let ghost = r.per_instance.iter().find(|t| t.id == "ghost").unwrap();
    assert_eq!(ghost.status, RowStatus::Skipped);
    assert_eq!(ghost.errors[0].kind, "protocol");
    assert!(ghost.errors[0].message.contains("unknown image"));
    assert_eq!(compute_metrics(&r.per_instance), r.metrics);
}

#[tokio::test(flavor = "multi_thread")]
async fn configuration_errors_precede_network_calls() {
    let server = common::start_mock().await;
    let cache = tempfile::tempdir().unwrap();
    let mut cfg = common::config(&server, "VQA_MC", "cola_zero", "oracle", cache.path());
    cfg.coordinator = None;
    match Harness::new(cfg) {
        Err(Error::Usage(m)) => assert!(m.contains("`coordinator`"), "{m}"),
        other => panic!("{other:?}"),
    }
    let mut cfg = common::config(&server, "VQA_MC", "single:GIT", "oracle", cache.path());
    cfg.mode = RunMode::Single("GIT".into());
    assert!(matches!(Harness::new(cfg), Err(Error::Usage(_))));
    assert!(server.requests().is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_data_fails_with_the_full_report() {
    let server = common::start_mock().await;
    let cache = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let val = dir.path().join("val.jsonl");
    let line = std::fs::read_to_string(common::mini("mc_val.jsonl"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(
        &val,
        format!(
            "{line}\n{line}\n{}\n",
            line.replace("\"gold_choice\":0", "\"gold_choice\":9")
        ),
    )
    .unwrap();
    let mut cfg = common::config(&server, "VQA_MC", "ensemble_vote", "oracle", cache.path());
    cfg.dataset.paths.insert(Split::Val, val);
    match Harness::new(cfg) {
        Err(Error::Validation(report)) => {
            assert!(report.len() >= 2, "{report}");
            assert!(report.offending_ids().iter().all(|id| *id == "mc_val_000"));
        }
        other => panic!("{other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn reports_round_trip_and_render() {
    let server = common::start_mock().await;
    let cache = tempfile::tempdir().unwrap();
    let r = run(common::config(&server, "VQA_MC", "single:BLIP", "oracle", cache.path())).await;
    let back: RunReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
    assert_eq!(r.metrics.n_degenerate, 2);
    let md = render_markdown(&[&r]);
    let acc = format!("{:.1}", r.metrics.mc_accuracy.unwrap() * 100.0);
    assert!(md.contains(&format!("| {acc} |")), "{md}");
    assert!(md.contains("2[^degenerate]"));
    assert!(md.contains("\n[^degenerate]:"));
}

#[tokio::test(flavor = "multi_thread")]
async fn template_flags_change_the_prompt() {
    let server = common::start_mock().await;
    let cache = tempfile::tempdir().unwrap();
    let mut with = common::config(&server, "VQA_MC", "cola_zero", "oracle", cache.path());
    with.limit = Some(3);
    let mut without = with.clone();
    without.template.include_choices = Some(false);
    let a = run(with).await;
    let b = run(without).await;
    assert_eq!(a.metrics.mc_accuracy, Some(1.0));
    for (x, y) in a.per_instance.iter().zip(&b.per_instance) {
        assert_ne!(x.prompt_fingerprint, y.prompt_fingerprint);
    }
}
