//! Stage orchestration over a workspace: extract, embed, label, build, export.
//!
//! Each stage hashes its inputs and skips itself when the stage ledger shows
//! the same fingerprint with outputs unchanged on disk.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, EncoderKind, PipelineConfig};
use crate::dataset::{attach_embeddings, load_annotations, LabeledSentence};
use crate::embed::{Embedder, EmbeddingCache, HttpEmbedder, MockEmbedder, EMBED_URL_ENV, MOCK_ENCODER_ID};
use crate::eval::{judge_pair, win_rate_table, AnnotationSet, DimensionVerdict, EvalError, JudgeOutcome};
use crate::expert::{evaluate_feature_models, one_hot_width, predict_expert_index, train_feature_models, FeatureModelSet};
use crate::graph::{build_graph, to_dot, BuildTrace, DotOptions, GraphError};
use crate::learn::DataSplit;
use crate::llm::{catalog, Cassette, ChatProvider, Gateway, GatewayError, GatewayMode, HttpProvider, PromptSpec, API_KEY_ENV};
use crate::model::{deserialize_graph, serialize_graph, CausalGraph, ExpertIndex, GraphMetadata, Vertex};
use crate::stac::{ablation_csv, ablation_run, parse_stac_reply, predict_stac_sentence, train_stac_with, AblationReport, StacModel, StacVariant};
use crate::vertex::{extract_vertices, Extraction, ExtractionError, NarrativeText};
use crate::workspace::{file_sha256, sha256_hex, stage_fingerprint, write_atomic, WorkspaceError, WorkspaceLayout, WorkspaceLock};

pub const MANIFEST_VERSION: u32 = 1;
const DEFAULT_CASSETTE: &str = "default.jsonl";
const TRAIN_SCOPE: &str = "training";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Ingest,
    Extract,
    Embed,
    Label,
    Train,
    Ablate,
    BuildGraph,
    Export,
    Judge,
    Kappa,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Embed => "embed",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Ablate => "ablate",
            Stage::BuildGraph => "build-graph",
            Stage::Export => "export",
            Stage::Judge => "judge",
            Stage::Kappa => "kappa",
            Stage::Report => "report",
        }
    }

    fn default_kind(self) -> ErrorKind {
        match self {
            Stage::Config | Stage::Ingest => ErrorKind::Config,
            Stage::Extract => ErrorKind::Extraction,
            Stage::Embed | Stage::Label | Stage::Train | Stage::Ablate => ErrorKind::Classification,
            Stage::BuildGraph | Stage::Export => ErrorKind::Graph,
            Stage::Judge | Stage::Kappa | Stage::Report => ErrorKind::Eval,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Config,
    Gateway,
    Extraction,
    Classification,
    Graph,
    Eval,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Gateway => 2,
            ErrorKind::Extraction => 3,
            ErrorKind::Classification => 4,
            ErrorKind::Graph => 5,
            ErrorKind::Eval => 6,
        }
    }
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub artifact: Option<PathBuf>,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        PipelineError { stage, kind: stage.default_kind(), artifact: None, message: message.into() }
    }

    pub fn kind(mut self, kind: ErrorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn at(mut self, path: impl Into<PathBuf>) -> Self {
        self.artifact = Some(path.into());
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)?;
        if let Some(p) = &self.artifact {
            write!(f, " ({})", p.display())?;
        }
        Ok(())
    }
}

impl std::error::Error for PipelineError {}

/// Errors that wrap a gateway failure exit with the gateway code whatever
/// stage they surface in.
trait IntoStage<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

macro_rules! stage_err {
    ($t:ty, $($gw:pat => $g:expr),*) => {
        impl<T> IntoStage<T> for Result<T, $t> {
            fn stage(self, stage: Stage) -> Result<T, PipelineError> {
                self.map_err(|e| {
                    let gateway = match &e { $($gw => $g,)* #[allow(unreachable_patterns)] _ => false };
                    let err = PipelineError::new(stage, e.to_string());
                    if gateway { err.kind(ErrorKind::Gateway) } else { err }
                })
            }
        }
    };
}

stage_err!(GatewayError, _ => true);
stage_err!(ExtractionError, ExtractionError::Gateway(_) => true);
stage_err!(GraphError, GraphError::Gateway(_) => true);
stage_err!(crate::stac::StacError, crate::stac::StacError::Gateway(_) => true);
stage_err!(crate::expert::ExpertError, crate::expert::ExpertError::Gateway(_) => true);
stage_err!(EvalError, EvalError::Gateway(_) => true);
stage_err!(WorkspaceError,);
stage_err!(crate::embed::EmbedError,);
stage_err!(crate::dataset::DatasetError,);
stage_err!(crate::model::ModelError,);
stage_err!(ConfigError,);

/// Test and embedding hooks: a provider and an embedder to use instead of
/// the ones the config names.
#[derive(Default, Clone)]
pub struct Overrides {
    pub provider: Option<Arc<dyn ChatProvider>>,
    pub embedder: Option<Arc<dyn Embedder>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub train_first: bool,
    pub gold_ei: bool,
    pub include_pruned: bool,
}

/// Vertices with their Expert Index and STAC labels attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVertices {
    pub narrative_id: String,
    pub vertices: Vec<Vertex>,
    pub request_hashes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteRef {
    pub sha256: String,
    pub requests: Vec<String>,
}

/// Written after every run. Carries no wall-clock times or cache flags, so
/// two runs over the same inputs produce the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub narrative_id: String,
    pub config_fingerprint: String,
    pub config: PipelineConfig,
    pub cassette: CassetteRef,
    pub stac_input: StacInputWidth,
    pub artifacts: BTreeMap<String, String>,
}

/// STAC input width, alongside the width the same layout would have with a
/// 13-wide Expert Index block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StacInputWidth {
    pub variant: StacVariant,
    pub width: Option<usize>,
    pub width_with_13_wide_ei: Option<usize>,
}

impl StacInputWidth {
    pub fn of(model: &StacModel) -> Self {
        let width = model.layout().map(|l| l.len(model.arity));
        let ei13 = model.layout().filter(|l| l.uses_ei()).and(width).map(|w| w - one_hot_width(model.arity) + 13);
        StacInputWidth { variant: model.variant, width, width_with_13_wide_ei: ei13.or(width) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageStatus {
    pub stage: Stage,
    pub cache_hit: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub narrative_id: String,
    pub graph: CausalGraph,
    pub trace: BuildTrace,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub stages: Vec<StageStatus>,
    pub provider_calls: usize,
}

impl RunOutcome {
    pub fn all_cached(&self) -> bool {
        self.stages.iter().all(|s| s.cache_hit)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: String,
    pub cache_hit: bool,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new(stage, e.to_string()).at(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::new(stage, format!("malformed artifact: {e}")).at(path))
}

fn write_text(path: &Path, text: &str, stage: Stage) -> Result<(), PipelineError> {
    write_atomic(path, text.as_bytes()).stage(stage).map_err(|e| e.at(path))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn sha_of(path: &Path, stage: Stage) -> Result<String, PipelineError> {
    file_sha256(path).stage(stage).map_err(|e| e.at(path))
}

/// An open workspace with its config, gateway and lock.
pub struct Session {
    pub config: PipelineConfig,
    pub layout: WorkspaceLayout,
    gateway: Gateway,
    cassette_path: PathBuf,
    embedder: OnceLock<Arc<dyn Embedder>>,
    embedder_override: Option<Arc<dyn Embedder>>,
    _lock: WorkspaceLock,
}

impl Session {
    /// Validates the config, builds the gateway and locks the workspace.
    /// Live and record modes without a provider fail here, before any stage.
    pub fn open(config: PipelineConfig, root: impl Into<PathBuf>, overrides: Overrides) -> Result<Self, PipelineError> {
        config.validate().stage(Stage::Config)?;
        let layout = WorkspaceLayout::create(root).stage(Stage::Config)?;
        let cassette_path = config.llm.cassette.clone().unwrap_or_else(|| layout.dir("cassettes").join(DEFAULT_CASSETTE));
        let mut builder = Gateway::builder(config.llm.mode).concurrency(config.llm.concurrency);
        if config.llm.mode != GatewayMode::Replay {
            let provider = match overrides.provider {
                Some(p) => p,
                None => {
                    let timeout = Duration::from_secs(config.llm.timeout_secs);
                    let p = HttpProvider::from_env(config.llm.base_url.as_deref(), timeout).ok_or_else(|| {
                        PipelineError::new(
                            Stage::Config,
                            format!("{} mode needs an API key in {API_KEY_ENV}", mode_name(config.llm.mode)),
                        )
                    })?;
                    Arc::new(p)
                }
            };
            builder = builder.provider(provider);
        }
        if config.llm.mode != GatewayMode::Live {
            let cassette = Cassette::open(&cassette_path).stage(Stage::Config).map_err(|e| e.at(&cassette_path))?;
            builder = builder.cassette(cassette);
        }
        let gateway = builder.build().stage(Stage::Config)?;
        let lock = layout.lock().stage(Stage::Config)?;
        Ok(Session {
            config,
            layout,
            gateway,
            cassette_path,
            embedder: OnceLock::new(),
            embedder_override: overrides.embedder,
            _lock: lock,
        })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn encoder_key(&self) -> String {
        if let Some(e) = &self.embedder_override {
            return e.encoder_id().to_string();
        }
        match self.config.embedding.encoder {
            EncoderKind::Mock => MOCK_ENCODER_ID.to_string(),
            EncoderKind::Http => format!("http:{}", self.embed_url().unwrap_or_default()),
        }
    }

    fn embed_url(&self) -> Option<String> {
        self.config
            .embedding
            .endpoint
            .clone()
            .or_else(|| std::env::var(EMBED_URL_ENV).ok().filter(|u| !u.trim().is_empty()))
    }

    /// Connects the embedder on first use.
    fn embedder(&self, stage: Stage) -> Result<&dyn Embedder, PipelineError> {
        if let Some(e) = self.embedder.get() {
            return Ok(e.as_ref());
        }
        let e: Arc<dyn Embedder> = match (&self.embedder_override, self.config.embedding.encoder) {
            (Some(e), _) => e.clone(),
            (None, EncoderKind::Mock) => Arc::new(MockEmbedder),
            (None, EncoderKind::Http) => {
                let url = self.embed_url().ok_or_else(|| {
                    PipelineError::new(Stage::Config, format!("http encoder needs embedding.endpoint or {EMBED_URL_ENV}"))
                })?;
                Arc::new(HttpEmbedder::connect(url, Duration::from_secs(self.config.llm.timeout_secs)).stage(stage)?)
            }
        };
        Ok(self.embedder.get_or_init(|| e).as_ref())
    }

    fn run_stage<F>(&self, scope: &str, stage: Stage, inputs: &[&str], outputs: &[&Path], body: F) -> Result<bool, PipelineError>
    where
        F: FnOnce() -> Result<(), PipelineError>,
    {
        let fp = stage_fingerprint(stage.name(), inputs);
        let mut ledger = self.layout.load_stages(scope);
        if ledger.is_fresh(&self.layout, stage.name(), &fp) {
            tracing::info!(scope, stage = stage.name(), "inputs unchanged, skipping");
            return Ok(true);
        }
        body()?;
        ledger.record(&self.layout, stage.name(), fp, outputs).stage(stage)?;
        self.layout.save_stages(scope, &ledger).stage(stage)?;
        Ok(false)
    }

    /// Copies a narrative file into the corpus and returns its id.
    pub fn ingest(&self, path: &Path) -> Result<String, PipelineError> {
        let text = NarrativeText::from_file(path).stage(Stage::Ingest).map_err(|e| e.at(path))?;
        self.layout.ingest(&text.id, &text.body).stage(Stage::Ingest).map_err(|e| e.at(path))?;
        Ok(text.id)
    }

    fn narrative(&self, id: &str) -> Result<NarrativeText, PipelineError> {
        let path = self.layout.corpus(id);
        if !path.exists() {
            return Err(PipelineError::new(Stage::Ingest, format!("narrative {id:?} is not in the corpus")).at(path));
        }
        NarrativeText::from_file(&path).stage(Stage::Extract).map_err(|e| e.at(path))
    }

    pub fn extract(&self, id: &str) -> Result<(Extraction, bool), PipelineError> {
        let corpus = self.layout.corpus(id);
        let text = self.narrative(id)?;
        let out = self.layout.extraction(id);
        let cfg = self.config.extraction();
        let inputs = [sha_of(&corpus, Stage::Extract)?, serde_json::to_string(&cfg.params).unwrap(), cfg.max_vertices.to_string()];
        let hit = self.run_stage(id, Stage::Extract, &inputs.each_ref().map(String::as_str), &[&out], || {
            let ex = extract_vertices(&text, &self.gateway, &cfg).stage(Stage::Extract)?;
            write_text(&out, &pretty(&ex), Stage::Extract)
        })?;
        Ok((read_json(&out, Stage::Extract)?, hit))
    }

    pub fn embed(&self, id: &str) -> Result<bool, PipelineError> {
        let src = self.layout.extraction(id);
        let out = self.layout.embeddings(id);
        let inputs = [sha_of(&src, Stage::Embed)?, self.encoder_key()];
        self.run_stage(id, Stage::Embed, &inputs.each_ref().map(String::as_str), &[&out], || {
            let ex: Extraction = read_json(&src, Stage::Embed)?;
            let texts: Vec<String> = ex.vertices.iter().map(|v| v.text.clone()).collect();
            let mut cache = EmbeddingCache::new();
            cache.embed_all(self.embedder(Stage::Embed)?, &texts).stage(Stage::Embed)?;
            cache.save(&out).stage(Stage::Embed).map_err(|e| e.at(&out))
        })
    }

    fn gold_lookup(&self) -> Result<HashMap<String, ExpertIndex>, PipelineError> {
        let path = self.training_dataset(Stage::Label)?;
        let rows = load_annotations(&path).stage(Stage::Label)?;
        Ok(rows.into_iter().map(|r| (r.text, r.expert_index)).collect())
    }

    fn training_dataset(&self, stage: Stage) -> Result<PathBuf, PipelineError> {
        self.config
            .training
            .dataset
            .clone()
            .ok_or_else(|| PipelineError::new(stage, "training.dataset is not set").kind(ErrorKind::Config))
    }

    /// Attaches Expert Index and STAC labels to the extracted vertices.
    pub fn label(&self, id: &str, gold_ei: bool) -> Result<(LabeledVertices, bool), PipelineError> {
        let src = self.layout.extraction(id);
        let emb = self.layout.embeddings(id);
        let stac_path = self.layout.stac_model();
        let feat_path = self.layout.feature_models();
        let out = self.layout.labeled(id);
        for p in [&stac_path].into_iter().chain((!gold_ei).then_some(&feat_path)) {
            if !p.exists() {
                return Err(PipelineError::new(Stage::Label, "model missing; run `train` or pass --train-first").at(p));
            }
        }
        let mut inputs = vec![
            sha_of(&src, Stage::Label)?,
            sha_of(&emb, Stage::Label)?,
            sha_of(&stac_path, Stage::Label)?,
            serde_json::to_string(&self.config.llm.params()).unwrap(),
        ];
        if gold_ei {
            inputs.push(format!("gold:{}", sha_of(&self.training_dataset(Stage::Label)?, Stage::Label)?));
        } else {
            inputs.push(sha_of(&feat_path, Stage::Label)?);
        }
        let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let hit = self.run_stage(id, Stage::Label, &refs, &[&out], || {
            let ex: Extraction = read_json(&src, Stage::Label)?;
            let cache = EmbeddingCache::load(&emb).stage(Stage::Label).map_err(|e| e.at(&emb))?;
            let stac = StacModel::load(&stac_path).stage(Stage::Label).map_err(|e| e.at(&stac_path))?;
            let texts: Vec<String> = ex.vertices.iter().map(|v| v.text.clone()).collect();
            let mut cache = cache;
            let embeddings = cache.embed_all(self.embedder(Stage::Label)?, &texts).stage(Stage::Label)?;
            let gold = if gold_ei { Some(self.gold_lookup()?) } else { None };
            let features = if gold_ei {
                None
            } else {
                let m = FeatureModelSet::load(&feat_path).stage(Stage::Label).map_err(|e| e.at(&feat_path))?;
                let enc = self.embedder(Stage::Label)?.encoder_id();
                if m.encoder_id != enc {
                    return Err(PipelineError::new(
                        Stage::Label,
                        format!("feature models were trained on {} embeddings, not {enc}", m.encoder_id),
                    )
                    .at(&feat_path));
                }
                Some(m)
            };
            let params = self.config.llm.params();
            let mut request_hashes = Vec::new();
            let mut vertices = ex.vertices;
            for (v, e) in vertices.iter_mut().zip(&embeddings) {
                let ei = match (&gold, &features) {
                    (Some(g), _) => *g.get(&v.text).ok_or_else(|| {
                        PipelineError::new(Stage::Label, format!("no annotated Expert Index for {:?}", v.text))
                    })?,
                    (None, Some(m)) => predict_expert_index(m, e).stage(Stage::Label)?,
                    (None, None) => unreachable!("one source is always loaded"),
                };
                let label = if stac.variant == StacVariant::PromptBased {
                    let c = self
                        .gateway
                        .complete(&PromptSpec::new(catalog::STAC_CLASSIFICATION).var("sentence", v.text.as_str()), &params)
                        .stage(Stage::Label)?;
                    request_hashes.push(c.request_hash);
                    parse_stac_reply(&c.text).stage(Stage::Label)?
                } else {
                    predict_stac_sentence(&stac, e, Some(&ei)).stage(Stage::Label)?
                };
                v.expert_index = Some(ei);
                v.stac = Some(label);
            }
            let labeled = LabeledVertices { narrative_id: id.to_string(), vertices, request_hashes };
            write_text(&out, &pretty(&labeled), Stage::Label)
        })?;
        Ok((read_json(&out, Stage::Label)?, hit))
    }

    fn load_training_data(&self, stage: Stage) -> Result<Vec<LabeledSentence>, PipelineError> {
        let path = self.training_dataset(stage)?;
        let rows = load_annotations(&path).stage(stage).map_err(|e| e.at(&path))?;
        let cache_path = self.layout.dataset_embeddings();
        let mut cache = EmbeddingCache::load(&cache_path).stage(stage).map_err(|e| e.at(&cache_path))?;
        let data = attach_embeddings(&rows, self.embedder(stage)?, &mut cache).stage(stage)?;
        cache.save(&cache_path).stage(stage).map_err(|e| e.at(&cache_path))?;
        Ok(data)
    }

    /// Scores the configured heads on a held-out split, then refits on every
    /// row and persists the refit models.
    pub fn train(&self) -> Result<TrainOutcome, PipelineError> {
        let dataset = self.training_dataset(Stage::Train)?;
        let t = &self.config.training;
        let feat_path = self.layout.feature_models();
        let stac_path = self.layout.stac_model();
        let report_path = self.layout.report("train.txt");
        let settings = serde_json::json!({
            "split_seed": t.split_seed, "test_fraction": t.test_fraction, "feature_head": t.feature_head,
            "stac_variant": t.stac_variant, "gbdt": t.gbdt, "softmax": t.softmax,
            "arity": self.config.schema.eventivity_arity,
        })
        .to_string();
        let inputs = [sha_of(&dataset, Stage::Train)?, self.encoder_key(), settings];
        let hit = self.run_stage(TRAIN_SCOPE, Stage::Train, &inputs.each_ref().map(String::as_str), &[&feat_path, &stac_path, &report_path], || {
            let data = self.load_training_data(Stage::Train)?;
            let encoder = self.embedder(Stage::Train)?.encoder_id().to_string();
            let mut report = format!("rows: {}\nencoder: {encoder}\n", data.len());
            if t.test_fraction > 0.0 {
                let eval_cfg = self.config.feature_training(t.test_fraction);
                let held = train_feature_models(&data, t.split_seed, &eval_cfg, &encoder).stage(Stage::Train)?;
                let split = DataSplit::new(data.len(), t.test_fraction, t.split_seed);
                let test: Vec<LabeledSentence> = split.test.iter().map(|&i| data[i].clone()).collect();
                let fr = evaluate_feature_models(&held, &test).stage(Stage::Train)?;
                report.push_str(&format!("\nExpert Index features (held-out {} rows)\n", test.len()));
                report.push_str(&fr.render());
                if t.stac_variant != StacVariant::PromptBased {
                    let ab = ablation_run(&data, &[t.split_seed], &[t.stac_variant], &self.config.stac_training(t.test_fraction), None)
                        .stage(Stage::Train)?;
                    let f1 = ab[0].macro_f1(t.stac_variant).map_or("\u{2014}".to_string(), |v| format!("{v:.3}"));
                    report.push_str(&format!("\nSTAC {} macro-F1 (held-out): {f1}\n", t.stac_variant.name()));
                }
            }
            let full = train_feature_models(&data, t.split_seed, &self.config.feature_training(0.0), &encoder).stage(Stage::Train)?;
            let stac = if t.stac_variant == StacVariant::PromptBased {
                StacModel::prompt_based()
            } else {
                train_stac_with(&data, t.stac_variant, t.split_seed, &self.config.stac_training(0.0)).stage(Stage::Train)?
            };
            write_text(&feat_path, &full.to_json(), Stage::Train)?;
            write_text(&stac_path, &stac.to_json(), Stage::Train)?;
            write_text(&report_path, &report, Stage::Train)
        })?;
        let report = std::fs::read_to_string(&report_path).map_err(|e| PipelineError::new(Stage::Train, e.to_string()).at(&report_path))?;
        Ok(TrainOutcome { report, cache_hit: hit })
    }

    /// Runs the STAC ablation over the configured seeds and writes a CSV.
    pub fn ablate(&self, seeds: Option<&[u64]>) -> Result<(Vec<AblationReport>, PathBuf), PipelineError> {
        let data = self.load_training_data(Stage::Ablate)?;
        let t = &self.config.training;
        let seeds = seeds.unwrap_or(&t.ablation_seeds);
        let params = self.config.llm.params();
        let use_llm = t.ablation_variants.contains(&StacVariant::PromptBased);
        let reports = ablation_run(
            &data,
            seeds,
            &t.ablation_variants,
            &self.config.stac_training(t.test_fraction),
            use_llm.then_some((&self.gateway, &params)),
        )
        .stage(Stage::Ablate)?;
        let out = self.layout.report("ablation.csv");
        write_text(&out, &ablation_csv(&reports), Stage::Ablate)?;
        Ok((reports, out))
    }

    pub fn build_graph(&self, id: &str) -> Result<(CausalGraph, BuildTrace, bool), PipelineError> {
        let src = self.layout.labeled(id);
        let graph_path = self.layout.graph(id);
        let trace_path = self.layout.trace(id);
        let schema = self.config.schema.bond_schema().stage(Stage::Config)?;
        let fingerprint = self.config.fingerprint();
        let inputs = [sha_of(&src, Stage::BuildGraph)?, fingerprint.clone()];
        let hit = self.run_stage(id, Stage::BuildGraph, &inputs.each_ref().map(String::as_str), &[&graph_path, &trace_path], || {
            let labeled: LabeledVertices = read_json(&src, Stage::BuildGraph)?;
            let metadata = GraphMetadata { narrative_id: id.to_string(), config_fingerprint: fingerprint.clone(), ..Default::default() };
            let (graph, trace) =
                build_graph(labeled.vertices, &schema, &self.gateway, &self.config.build(), metadata).stage(Stage::BuildGraph)?;
            let doc = serialize_graph(&graph).stage(Stage::BuildGraph)?;
            write_text(&graph_path, &doc, Stage::BuildGraph)?;
            write_text(&trace_path, &trace.to_json(), Stage::BuildGraph)
        })?;
        let graph = load_graph(&graph_path, Stage::BuildGraph)?;
        let trace: BuildTrace = read_json(&trace_path, Stage::BuildGraph)?;
        Ok((graph, trace, hit))
    }

    pub fn export_dot(&self, id: &str, include_pruned: bool) -> Result<(PathBuf, bool), PipelineError> {
        let graph_path = self.layout.graph(id);
        let trace_path = self.layout.trace(id);
        let out = self.layout.dot(id);
        let inputs = [sha_of(&graph_path, Stage::Export)?, sha_of(&trace_path, Stage::Export)?, include_pruned.to_string()];
        let hit = self.run_stage(id, Stage::Export, &inputs.each_ref().map(String::as_str), &[&out], || {
            let graph = load_graph(&graph_path, Stage::Export)?;
            let trace: BuildTrace = read_json(&trace_path, Stage::Export)?;
            write_text(&out, &to_dot(&graph, Some(&trace), DotOptions { include_pruned }), Stage::Export)
        })?;
        Ok((out, hit))
    }

    /// Compares two graph documents for one corpus narrative and stores the
    /// verdicts under `reports/<id>.judge.json`.
    pub fn judge(&self, id: &str, graph_a: &Path, graph_b: &Path, seed: u64) -> Result<JudgeOutcome, PipelineError> {
        let story = self.narrative(id)?.body;
        let a = load_graph(graph_a, Stage::Judge)?;
        let b = load_graph(graph_b, Stage::Judge)?;
        let outcome = judge_pair(id, &story, &a, &b, &self.gateway, &self.config.llm.params(), seed).stage(Stage::Judge)?;
        write_text(&self.layout.report(&format!("{id}.judge.json")), &pretty(&outcome), Stage::Judge)?;
        Ok(outcome)
    }

    /// Summarizes every manifest and judge file in `reports/`.
    pub fn report(&self) -> Result<(String, PathBuf), PipelineError> {
        let list = |dir: &Path| -> Result<Vec<String>, PipelineError> {
            let mut names: Vec<String> = std::fs::read_dir(dir)
                .map_err(|e| PipelineError::new(Stage::Report, e.to_string()).at(dir))?
                .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
                .collect();
            names.sort();
            Ok(names)
        };
        let mut out = String::from("narrative            vertices  edges  pruned  isolated  connectivity\n");
        for name in list(&self.layout.dir("graphs"))? {
            let Some(id) = name.strip_suffix(".graph.json") else { continue };
            let graph = load_graph(&self.layout.graph(id), Stage::Report)?;
            let pruned = match self.layout.trace(id).exists() {
                true => read_json::<BuildTrace>(&self.layout.trace(id), Stage::Report)?.pruned().count().to_string(),
                false => "-".to_string(),
            };
            let conn = graph.metadata.connectivity.as_ref().map_or("-".to_string(), |c| format!("{:?}", c.status));
            out.push_str(&format!(
                "{:<20} {:>8} {:>6} {:>7} {:>9}  {}\n",
                id,
                graph.vertices.len(),
                graph.edges.len(),
                pruned,
                graph.isolated().len(),
                conn
            ));
        }
        let dir = self.layout.dir("reports");
        let mut verdicts: Vec<DimensionVerdict> = Vec::new();
        for name in list(&dir)? {
            if name.ends_with(".judge.json") {
                let j: JudgeOutcome = read_json(&dir.join(name), Stage::Report)?;
                verdicts.extend(j.verdicts);
            }
        }
        if !verdicts.is_empty() {
            out.push_str("\nJudge win rate of graph A\n");
            out.push_str(&win_rate_table(&verdicts).render());
        }
        let path = self.layout.report("summary.txt");
        write_text(&path, &out, Stage::Report)?;
        Ok((out, path))
    }

    /// Full pipeline for one narrative file. The manifest lists the config,
    /// the cassette and every artifact hash.
    pub fn run(&self, narrative: &Path, options: RunOptions) -> Result<RunOutcome, PipelineError> {
        let calls_before = self.gateway.stats().provider_calls;
        let id = self.ingest(narrative)?;
        let mut stages = Vec::new();
        if options.train_first {
            stages.push(StageStatus { stage: Stage::Train, cache_hit: self.train()?.cache_hit });
        } else {
            let needed = [self.layout.stac_model()]
                .into_iter()
                .chain((!options.gold_ei).then(|| self.layout.feature_models()));
            for p in needed {
                if !p.exists() {
                    return Err(PipelineError::new(Stage::Config, "model missing; run `train` or pass --train-first").at(p));
                }
            }
        }
        let (extraction, hit) = self.extract(&id)?;
        stages.push(StageStatus { stage: Stage::Extract, cache_hit: hit });
        stages.push(StageStatus { stage: Stage::Embed, cache_hit: self.embed(&id)? });
        let (labeled, hit) = self.label(&id, options.gold_ei)?;
        stages.push(StageStatus { stage: Stage::Label, cache_hit: hit });
        let (graph, trace, hit) = self.build_graph(&id)?;
        stages.push(StageStatus { stage: Stage::BuildGraph, cache_hit: hit });
        let (_, hit) = self.export_dot(&id, options.include_pruned)?;
        stages.push(StageStatus { stage: Stage::Export, cache_hit: hit });

        let mut requests: BTreeSet<String> = extraction.request_hashes.iter().cloned().collect();
        requests.extend(labeled.request_hashes.iter().cloned());
        requests.extend(trace.request_hashes().into_iter().map(String::from));
        let cassette_sha = match std::fs::read(&self.cassette_path) {
            Ok(bytes) => sha256_hex(&bytes),
            Err(_) => sha256_hex(self.gateway.cassette_jsonl().as_bytes()),
        };
        let mut artifacts = BTreeMap::new();
        let mut paths = vec![
            self.layout.corpus(&id),
            self.layout.extraction(&id),
            self.layout.embeddings(&id),
            self.layout.labeled(&id),
            self.layout.stac_model(),
            self.layout.graph(&id),
            self.layout.trace(&id),
            self.layout.dot(&id),
        ];
        if !options.gold_ei {
            paths.push(self.layout.feature_models());
        }
        for p in &paths {
            let rel = p.strip_prefix(&self.layout.root).unwrap_or(p).to_string_lossy().replace('\\', "/");
            artifacts.insert(rel, sha_of(p, Stage::Report)?);
        }
        let manifest = Manifest {
            manifest_version: MANIFEST_VERSION,
            narrative_id: id.clone(),
            config_fingerprint: self.config.fingerprint(),
            config: self.config.clone(),
            cassette: CassetteRef { sha256: cassette_sha, requests: requests.into_iter().collect() },
            stac_input: StacInputWidth::of(&StacModel::load(&self.layout.stac_model()).stage(Stage::Report)?),
            artifacts,
        };
        let manifest_path = self.layout.manifest(&id);
        write_text(&manifest_path, &pretty(&manifest), Stage::Report)?;
        Ok(RunOutcome {
            narrative_id: id,
            graph,
            trace,
            manifest,
            manifest_path,
            stages,
            provider_calls: self.gateway.stats().provider_calls - calls_before,
        })
    }
}

fn mode_name(m: GatewayMode) -> &'static str {
    match m {
        GatewayMode::Live => "live",
        GatewayMode::Record => "record",
        GatewayMode::Replay => "replay",
    }
}

pub fn load_graph(path: &Path, stage: Stage) -> Result<CausalGraph, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new(stage, e.to_string()).at(path))?;
    deserialize_graph(&text).stage(stage).map_err(|e| e.at(path))
}

/// Opens a session and runs the whole pipeline on one narrative.
pub fn run_pipeline(
    narrative: &Path,
    config: &PipelineConfig,
    workspace: &Path,
    options: RunOptions,
    overrides: Overrides,
) -> Result<RunOutcome, PipelineError> {
    let mut config = config.clone();
    config.gold_ei |= options.gold_ei;
    let options = RunOptions { gold_ei: config.gold_ei, ..options };
    Session::open(config, workspace, overrides)?.run(narrative, options)
}

/// Pairwise Cohen's kappa between all annotators plus the per-item mode.
pub fn kappa_report(path: &Path) -> Result<String, PipelineError> {
    let set = AnnotationSet::from_csv(path).stage(Stage::Kappa).map_err(|e| e.at(path))?;
    let annotators: Vec<&str> = set.annotators().into_iter().collect();
    let mut out = String::from("annotator_a  annotator_b  items  kappa\n");
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let cell = match set.pairwise_kappa(a, b) {
                Ok((k, n)) => format!("{n:>5}  {k:.4}"),
                Err(EvalError::DegenerateAgreement) => "    -  undefined".to_string(),
                Err(e) => return Err(e).stage(Stage::Kappa),
            };
            out.push_str(&format!("{a:<12} {b:<12} {cell}\n"));
        }
    }
    let mode = set.aggregate();
    let ties = mode.values().filter(|m| m.tie).count();
    out.push_str(&format!("\n{} items aggregated by mode, {ties} ties broken by label order\n", mode.len()));
    Ok(out)
}
