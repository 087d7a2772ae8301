use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ncg_core::config::PipelineConfig;
use ncg_core::dataset::load_annotations;
use ncg_core::llm::{ChatProvider, ChatRequest, GatewayMode, ProviderError, API_KEY_ENV};
use ncg_core::model::{deserialize_graph, serialize_graph};
use ncg_core::pipeline::{run_pipeline, ErrorKind, Overrides, RunOptions, Session, Stage};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fable_config() -> PipelineConfig {
    PipelineConfig::load(&fixtures().join("fable.toml")).unwrap()
}

fn seed_models(ws: &Path) {
    std::fs::create_dir_all(ws.join("models")).unwrap();
    for m in ["features.json", "stac.json"] {
        std::fs::copy(fixtures().join("models").join(m), ws.join("models").join(m)).unwrap();
    }
}

fn golden_graph() -> String {
    std::fs::read_to_string(fixtures().join("golden/fable.graph.json")).unwrap()
}

fn refusing_provider(calls: Arc<AtomicUsize>) -> Arc<dyn ChatProvider> {
    Arc::new(move |_: &ChatRequest| {
        calls.fetch_add(1, Ordering::SeqCst);
        Err(ProviderError::Rejected { status: 500, message: "not expected".into() })
    })
}

#[test]
fn replay_matches_golden_outputs() {
    let ws = tempfile::tempdir().unwrap();
    seed_models(ws.path());
    let out = run_pipeline(&fixtures().join("fable.txt"), &fable_config(), ws.path(), RunOptions::default(), Overrides::default()).unwrap();
    assert_eq!(serialize_graph(&out.graph).unwrap(), golden_graph());
    let trace = std::fs::read_to_string(ws.path().join("traces/fable.trace.json")).unwrap();
    assert_eq!(trace, std::fs::read_to_string(fixtures().join("golden/fable.trace.json")).unwrap());
    let dot = std::fs::read_to_string(ws.path().join("graphs/fable.dot")).unwrap();
    assert_eq!(dot, std::fs::read_to_string(fixtures().join("golden/fable.dot")).unwrap());
    assert_eq!(out.trace.pair_evaluations, 45);
    assert_eq!(out.trace.pruned().count(), 2);
    assert!(out.graph.isolated().is_empty());
    assert!(!out.manifest.cassette.requests.is_empty());
    assert_eq!(out.manifest.config_fingerprint, fable_config().fingerprint());
}

#[test]
fn rerun_hits_every_stage_cache_without_provider_calls() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    seed_models(&ws);
    let cassette = dir.path().join("fable.jsonl");
    std::fs::copy(fixtures().join("fable.cassette.jsonl"), &cassette).unwrap();
    let mut config = fable_config();
    config.llm.mode = GatewayMode::Record;
    config.llm.cassette = Some(cassette.clone());
    let calls = Arc::new(AtomicUsize::new(0));
    let overrides = Overrides { provider: Some(refusing_provider(calls.clone())), embedder: None };

    let first = run_pipeline(&fixtures().join("fable.txt"), &config, &ws, RunOptions::default(), overrides.clone()).unwrap();
    assert!(!first.all_cached());
    let second = run_pipeline(&fixtures().join("fable.txt"), &config, &ws, RunOptions::default(), overrides).unwrap();
    assert!(second.all_cached(), "{:?}", second.stages);
    assert_eq!(calls.load(Ordering::SeqCst), 0);
    assert_eq!(first.manifest, second.manifest);
    assert_eq!(std::fs::read(&cassette).unwrap(), std::fs::read(fixtures().join("fable.cassette.jsonl")).unwrap());
}

#[test]
fn changed_input_reruns_only_downstream_stages() {
    let ws = tempfile::tempdir().unwrap();
    seed_models(ws.path());
    let config = fable_config();
    run_pipeline(&fixtures().join("fable.txt"), &config, ws.path(), RunOptions::default(), Overrides::default()).unwrap();
    let out = run_pipeline(
        &fixtures().join("fable.txt"),
        &config,
        ws.path(),
        RunOptions { include_pruned: true, ..Default::default() },
        Overrides::default(),
    )
    .unwrap();
    let cached: Vec<(Stage, bool)> = out.stages.iter().map(|s| (s.stage, s.cache_hit)).collect();
    assert_eq!(
        cached,
        vec![(Stage::Extract, true), (Stage::Embed, true), (Stage::Label, true), (Stage::BuildGraph, true), (Stage::Export, false)]
    );
    let dot = std::fs::read_to_string(ws.path().join("graphs/fable.dot")).unwrap();
    assert_eq!(dot.matches("style=dashed").count(), 2);
}

#[test]
fn live_mode_without_key_fails_before_any_stage() {
    if std::env::var(API_KEY_ENV).is_ok_and(|k| !k.is_empty()) {
        return;
    }
    let ws = tempfile::tempdir().unwrap();
    let mut config = fable_config();
    config.llm.mode = GatewayMode::Live;
    let err = run_pipeline(&fixtures().join("fable.txt"), &config, ws.path(), RunOptions::default(), Overrides::default()).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert_eq!(err.exit_code(), 1);
    assert!(err.message.contains(API_KEY_ENV));
    assert!(!ws.path().join("corpus/fable.txt").exists());
    assert!(!ws.path().join(".lock").exists());
}

#[test]
fn missing_models_are_a_precondition_error() {
    let ws = tempfile::tempdir().unwrap();
    let err = run_pipeline(&fixtures().join("fable.txt"), &fable_config(), ws.path(), RunOptions::default(), Overrides::default()).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Config);
    assert!(err.artifact.unwrap().ends_with("models/stac.json"));
    assert!(!ws.path().join("vertices/fable.extraction.json").exists());
}

#[test]
fn cassette_miss_is_a_gateway_error() {
    let dir = tempfile::tempdir().unwrap();
    seed_models(&dir.path().join("ws"));
    let mut config = fable_config();
    config.llm.cassette = Some(dir.path().join("empty.jsonl"));
    let err = run_pipeline(&fixtures().join("fable.txt"), &config, &dir.path().join("ws"), RunOptions::default(), Overrides::default())
        .unwrap_err();
    assert_eq!(err.stage, Stage::Extract);
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn train_first_reproduces_committed_models_and_graph() {
    let ws = tempfile::tempdir().unwrap();
    let options = RunOptions { train_first: true, ..Default::default() };
    let out = run_pipeline(&fixtures().join("fable.txt"), &fable_config(), ws.path(), options, Overrides::default()).unwrap();
    for m in ["features.json", "stac.json"] {
        let trained = std::fs::read(ws.path().join("models").join(m)).unwrap();
        assert!(trained == std::fs::read(fixtures().join("models").join(m)).unwrap(), "{m} differs from the fixture");
    }
    assert_eq!(serialize_graph(&out.graph).unwrap(), golden_graph());
}

#[test]
fn gold_expert_index_comes_from_the_dataset() {
    let ws = tempfile::tempdir().unwrap();
    seed_models(ws.path());
    let options = RunOptions { gold_ei: true, ..Default::default() };
    let out = run_pipeline(&fixtures().join("fable.txt"), &fable_config(), ws.path(), options, Overrides::default()).unwrap();
    let rows = load_annotations(&fixtures().join("fable_dataset.csv")).unwrap();
    for v in &out.graph.vertices {
        let row = rows.iter().find(|r| r.text == v.text).unwrap();
        assert_eq!(v.expert_index, Some(row.expert_index));
        assert_eq!(v.stac, row.stac);
    }
    assert!(out.manifest.config.gold_ei);
    assert!(!out.manifest.artifacts.contains_key("models/features.json"));
    assert_ne!(out.manifest.config_fingerprint, fable_config().fingerprint());
}

#[test]
fn corpus_is_never_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let s = Session::open(fable_config(), dir.path().join("ws"), Overrides::default()).unwrap();
    let id = s.ingest(&fixtures().join("fable.txt")).unwrap();
    assert_eq!(s.ingest(&fixtures().join("fable.txt")).unwrap(), id);
    let other = dir.path().join("fable.txt");
    std::fs::write(&other, "A different story.\n").unwrap();
    let err = s.ingest(&other).unwrap_err();
    assert_eq!(err.stage, Stage::Ingest);
    let kept = std::fs::read_to_string(s.layout.corpus(&id)).unwrap();
    assert_eq!(kept, std::fs::read_to_string(fixtures().join("fable.txt")).unwrap());
}

#[test]
fn one_session_per_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let first = Session::open(fable_config(), dir.path(), Overrides::default()).unwrap();
    let err = Session::open(fable_config(), dir.path(), Overrides::default()).err().unwrap();
    assert_eq!(err.stage, Stage::Config);
    drop(first);
    Session::open(fable_config(), dir.path(), Overrides::default()).unwrap();
}

#[test]
fn judge_and_report_over_two_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    seed_models(&ws);
    run_pipeline(&fixtures().join("fable.txt"), &fable_config(), &ws, RunOptions::default(), Overrides::default()).unwrap();

    let mut sparse = deserialize_graph(&golden_graph()).unwrap();
    sparse.edges.truncate(3);
    let b = dir.path().join("sparse.json");
    std::fs::write(&b, serialize_graph(&sparse).unwrap()).unwrap();

    let mut config = fable_config();
    config.llm.mode = GatewayMode::Live;
    let provider: Arc<dyn ChatProvider> = Arc::new(|_: &ChatRequest| {
        Ok(ncg_core::eval::Dimension::ALL.iter().map(|d| format!("{}: Graph 1", d.name())).collect::<Vec<_>>().join("\n"))
    });
    let s = Session::open(config, &ws, Overrides { provider: Some(provider), embedder: None }).unwrap();
    let out = s.judge("fable", &fixtures().join("golden/fable.graph.json"), &b, 0).unwrap();
    assert_eq!(out.verdicts.len(), 8);
    let expected = if out.swapped { ncg_core::eval::Side::B } else { ncg_core::eval::Side::A };
    assert!(out.verdicts.iter().all(|v| v.winner == expected));

    let (text, _) = s.report().unwrap();
    assert!(text.contains("fable"));
    assert!(text.contains("Win rate"));
    let g = fixtures().join("golden/fable.graph.json");
    assert_eq!(s.judge("fable", &g, &g, 0).unwrap_err().exit_code(), 6);
}

#[test]
fn manifest_records_stac_input_width() {
    let ws = tempfile::tempdir().unwrap();
    seed_models(ws.path());
    let out = run_pipeline(&fixtures().join("fable.txt"), &fable_config(), ws.path(), RunOptions::default(), Overrides::default()).unwrap();
    assert_eq!(out.manifest.stac_input.width, Some(783));
    assert_eq!(out.manifest.stac_input.width_with_13_wide_ei, Some(781));
}
