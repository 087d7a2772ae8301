//! Expert Index: one-hot encoding, per-trait classifiers over sentence
//! embeddings, per-trait evaluation, and model-based labeling.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answer::{first_line, single_keyword};
use crate::dataset::LabeledSentence;
use crate::embed::SentenceEmbedding;
use crate::eval::{classification_metrics_with, fmt_metric, EvalError};
use crate::learn::{Classifier, DataSplit, GbdtParams, HeadKind, LearnError, SoftmaxParams};
use crate::llm::{catalog, Gateway, GatewayError, GenerationParams, PromptSpec};
use crate::model::{
    Boundedness, EiTrait, Eventivity, EventivityArity, ExpertIndex, Genericity, Impact, Initiativity, TimeEnd,
    TimeStart,
};

pub const FEATURE_MODELS_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExpertError {
    #[error("degenerate training data for {trait_name}: {message}")]
    Degenerate { trait_name: &'static str, message: String },
    #[error("no trained model for trait {0}")]
    MissingTrait(&'static str),
    #[error("model for {trait_name} expects {expected} features, got {got}")]
    Width { trait_name: &'static str, expected: usize, got: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("cannot parse {trait_name} answer {raw:?}")]
    Parse { trait_name: &'static str, raw: String },
    #[error("feature model file {path}: {message}")]
    Artifact { path: String, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Width of the block one-hot code: 15 with two eventivity classes, 16 with three.
pub fn one_hot_width(arity: EventivityArity) -> usize {
    EiTrait::ALL.iter().map(|t| t.arity(arity)).sum()
}

/// Start offset of each trait's block, in [`EiTrait::ALL`] order.
pub fn one_hot_offsets(arity: EventivityArity) -> [usize; 7] {
    let mut out = [0; 7];
    let mut acc = 0;
    for (i, t) in EiTrait::ALL.iter().enumerate() {
        out[i] = acc;
        acc += t.arity(arity);
    }
    out
}

/// Block one-hot code under the default two-way eventivity schema.
pub fn encode_one_hot(ei: &ExpertIndex) -> Vec<f32> {
    encode_one_hot_with(ei, EventivityArity::Two)
}

pub fn encode_one_hot_with(ei: &ExpertIndex, arity: EventivityArity) -> Vec<f32> {
    let mut v = vec![0.0; one_hot_width(arity)];
    for (t, off) in EiTrait::ALL.iter().zip(one_hot_offsets(arity)) {
        v[off + ei.category(*t, arity)] = 1.0;
    }
    v
}

/// Every trait combination of the default schema (192 records).
pub fn enumerate_combinations() -> Vec<ExpertIndex> {
    enumerate_combinations_with(EventivityArity::Two)
}

/// Cartesian product of all trait categories, with the last trait varying fastest.
pub fn enumerate_combinations_with(arity: EventivityArity) -> Vec<ExpertIndex> {
    let sizes: Vec<usize> = EiTrait::ALL.iter().map(|t| t.arity(arity)).collect();
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut n in 0..total {
        let mut idx = [0usize; 7];
        for i in (0..7).rev() {
            idx[i] = n % sizes[i];
            n /= sizes[i];
        }
        out.push(ExpertIndex::from_categories(idx, arity).expect("indices in range"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureTrainConfig {
    pub head: HeadKind,
    pub gbdt: GbdtParams,
    pub softmax: SoftmaxParams,
    pub test_fraction: f64,
    pub arity: EventivityArity,
}

impl Default for FeatureTrainConfig {
    fn default() -> Self {
        FeatureTrainConfig {
            head: HeadKind::Tree,
            gbdt: GbdtParams::default(),
            softmax: SoftmaxParams::default(),
            test_fraction: 0.2,
            arity: EventivityArity::Two,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    #[serde(rename = "trait")]
    pub trait_name: EiTrait,
    pub classes: Vec<String>,
    pub arity: EventivityArity,
    pub classifier: Classifier,
    pub split: DataSplit,
}

impl FeatureModel {
    pub fn predict_category(&self, embedding: &SentenceEmbedding) -> Result<usize, ExpertError> {
        self.classifier.predict(&embedding.vector).map_err(|e| match e {
            LearnError::Width { expected, got } => ExpertError::Width { trait_name: self.trait_name.key(), expected, got },
            LearnError::Degenerate(m) => ExpertError::Degenerate { trait_name: self.trait_name.key(), message: m },
        })
    }
}

/// Trains one trait head on the training part of a seeded split. With
/// `test_fraction` 0 every row is used for training.
pub fn train_feature_classifier(
    data: &[LabeledSentence],
    trait_name: EiTrait,
    split_seed: u64,
) -> Result<FeatureModel, ExpertError> {
    train_feature_classifier_with(data, trait_name, split_seed, &FeatureTrainConfig::default())
}

pub fn train_feature_classifier_with(
    data: &[LabeledSentence],
    trait_name: EiTrait,
    split_seed: u64,
    config: &FeatureTrainConfig,
) -> Result<FeatureModel, ExpertError> {
    let arity = config.arity;
    let degenerate = |message: String| ExpertError::Degenerate { trait_name: trait_name.key(), message };
    let labels: Vec<usize> = data.iter().map(|d| d.expert_index.category(trait_name, arity)).collect();
    if labels.iter().all(|&l| Some(&l) == labels.first()) {
        return Err(degenerate(format!("fewer than two classes among {} rows", data.len())));
    }
    let split = DataSplit::new(data.len(), config.test_fraction, split_seed);
    let x: Vec<Vec<f32>> = split.train.iter().map(|&i| data[i].embedding.vector.clone()).collect();
    let y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let classifier =
        Classifier::fit(config.head, &x, &y, trait_name.arity(arity), &config.gbdt, &config.softmax, split_seed)
            .map_err(|e| degenerate(e.to_string()))?;
    Ok(FeatureModel {
        trait_name,
        classes: trait_name.classes(arity).into_iter().map(String::from).collect(),
        arity,
        classifier,
        split,
    })
}

/// One model per trait, ready for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModelSet {
    pub version: u32,
    pub arity: EventivityArity,
    pub encoder_id: String,
    pub models: BTreeMap<EiTrait, FeatureModel>,
}

impl FeatureModelSet {
    pub fn new(arity: EventivityArity, encoder_id: impl Into<String>) -> Self {
        FeatureModelSet { version: FEATURE_MODELS_VERSION, arity, encoder_id: encoder_id.into(), models: BTreeMap::new() }
    }

    pub fn insert(&mut self, model: FeatureModel) {
        self.models.insert(model.trait_name, model);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feature models serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ExpertError> {
        let set: FeatureModelSet = serde_json::from_str(text)
            .map_err(|e| ExpertError::Artifact { path: "<text>".into(), message: e.to_string() })?;
        if set.version != FEATURE_MODELS_VERSION {
            return Err(ExpertError::Artifact { path: "<text>".into(), message: format!("unsupported version {}", set.version) });
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ExpertError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpertError::Artifact { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text).map_err(|e| match e {
            ExpertError::Artifact { message, .. } => ExpertError::Artifact { path: path.display().to_string(), message },
            other => other,
        })
    }
}

/// Trains all seven trait heads, one thread per trait.
pub fn train_feature_models(
    data: &[LabeledSentence],
    split_seed: u64,
    config: &FeatureTrainConfig,
    encoder_id: &str,
) -> Result<FeatureModelSet, ExpertError> {
    let results: Vec<Result<FeatureModel, ExpertError>> = std::thread::scope(|s| {
        let handles: Vec<_> = EiTrait::ALL
            .iter()
            .map(|&t| s.spawn(move || train_feature_classifier_with(data, t, split_seed, config)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("trait training panicked")).collect()
    });
    let mut set = FeatureModelSet::new(config.arity, encoder_id);
    for r in results {
        set.insert(r?);
    }
    Ok(set)
}

pub fn predict_expert_index(models: &FeatureModelSet, embedding: &SentenceEmbedding) -> Result<ExpertIndex, ExpertError> {
    let mut idx = [0usize; 7];
    for (i, t) in EiTrait::ALL.iter().enumerate() {
        let m = models.models.get(t).ok_or(ExpertError::MissingTrait(t.key()))?;
        idx[i] = m.predict_category(embedding)?;
    }
    Ok(ExpertIndex::from_categories(idx, models.arity).expect("classifier output within class range"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReportRow {
    #[serde(rename = "trait")]
    pub trait_name: EiTrait,
    pub class: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub rows: Vec<FeatureReportRow>,
    pub n: usize,
}

impl FeatureReport {
    pub fn row(&self, t: EiTrait, class: &str) -> Option<&FeatureReportRow> {
        self.rows.iter().find(|r| r.trait_name == t && r.class == class)
    }

    /// Plain-text table grouped by trait, one row per class.
    pub fn render(&self) -> String {
        let mut out = format!("Classification results (test set, n={})\n", self.n);
        out.push_str(&format!("{:<14} {:<16} {:>9} {:>7} {:>8}\n", "Feature", "Class", "Precision", "Recall", "F1-score"));
        let mut last = None;
        for r in &self.rows {
            let name = if last == Some(r.trait_name) { "" } else { r.trait_name.display_name() };
            last = Some(r.trait_name);
            out.push_str(&format!(
                "{:<14} {:<16} {:>9} {:>7} {:>8}\n",
                name,
                r.class,
                fmt_metric(r.precision),
                fmt_metric(r.recall),
                fmt_metric(r.f1)
            ));
        }
        out
    }
}

/// Per-trait, per-class metrics of `models` on `testset`.
pub fn evaluate_feature_models(models: &FeatureModelSet, testset: &[LabeledSentence]) -> Result<FeatureReport, ExpertError> {
    if testset.is_empty() {
        return Err(ExpertError::EmptyTestSet);
    }
    let mut rows = Vec::new();
    for t in EiTrait::ALL {
        let m = models.models.get(&t).ok_or(ExpertError::MissingTrait(t.key()))?;
        let mut gold = Vec::with_capacity(testset.len());
        let mut pred = Vec::with_capacity(testset.len());
        for s in testset {
            gold.push(s.expert_index.category(t, models.arity));
            pred.push(m.predict_category(&s.embedding)?);
        }
        let classes: Vec<usize> = (0..m.classes.len()).collect();
        let report = classification_metrics_with(&gold, &pred, &classes)?;
        for (c, cm) in report.classes.iter().enumerate() {
            rows.push(FeatureReportRow {
                trait_name: t,
                class: m.classes[c].clone(),
                precision: cm.precision,
                recall: cm.recall,
                f1: cm.f1,
                support: cm.support,
            });
        }
    }
    Ok(FeatureReport { rows, n: testset.len() })
}

/// Prompt template used to label one trait.
pub fn trait_template(t: EiTrait) -> &'static str {
    match t {
        EiTrait::Genericity => catalog::EI_SPECIFICITY,
        EiTrait::Eventivity => catalog::EI_EVENTIVITY,
        EiTrait::Boundedness => catalog::EI_BOUNDEDNESS,
        EiTrait::Initiativity => catalog::EI_INITIATIVE,
        EiTrait::TimeStart => catalog::EI_TIME_START,
        EiTrait::TimeEnd => catalog::EI_TIME_END,
        EiTrait::Impact => catalog::EI_IMPACT,
    }
}

/// Reads a single trait answer and stores it in `ei`. Letter codes are
/// accepted only as the whole first line; otherwise exactly one category
/// keyword must appear.
pub fn parse_trait_answer(t: EiTrait, reply: &str, ei: &mut ExpertIndex) -> Result<(), ExpertError> {
    let err = || ExpertError::Parse { trait_name: t.key(), raw: reply.to_string() };
    let head = first_line(reply).to_ascii_uppercase();
    match t {
        EiTrait::Genericity => {
            ei.genericity = single_keyword(reply, &[("specific", Genericity::Specific), ("generic", Genericity::Generic)])
                .ok_or_else(err)?
        }
        EiTrait::Eventivity => {
            ei.eventivity = single_keyword(
                reply,
                &[
                    ("dynamic", Eventivity::Dynamic),
                    ("dynamically active", Eventivity::Dynamic),
                    ("stative", Eventivity::Stative),
                    ("mentally active", Eventivity::MentallyActive),
                ],
            )
            .ok_or_else(err)?
        }
        EiTrait::Boundedness => {
            ei.boundedness = single_keyword(
                reply,
                &[("episodic", Boundedness::Episodic), ("habitual", Boundedness::Habitual), ("static", Boundedness::Static)],
            )
            .ok_or_else(err)?
        }
        EiTrait::Initiativity => {
            ei.initiativity = single_keyword(
                reply,
                &[("initiate", Initiativity::Initiate), ("initiates", Initiativity::Initiate), ("receive", Initiativity::Receive), ("receives", Initiativity::Receive)],
            )
            .ok_or_else(err)?
        }
        EiTrait::TimeStart => {
            ei.time_start = match head.as_str() {
                "P" => TimeStart::Past,
                "C" => TimeStart::Current,
                _ => single_keyword(reply, &[("past", TimeStart::Past), ("current", TimeStart::Current), ("now", TimeStart::Current)])
                    .ok_or_else(err)?,
            }
        }
        EiTrait::TimeEnd => {
            ei.time_end = match head.as_str() {
                "C" => TimeEnd::Current,
                "F" => TimeEnd::Future,
                _ => single_keyword(reply, &[("current", TimeEnd::Current), ("future", TimeEnd::Future)]).ok_or_else(err)?,
            }
        }
        EiTrait::Impact => {
            ei.impact =
                single_keyword(reply, &[("impactful", Impact::Impactful), ("resolved", Impact::Resolved)]).ok_or_else(err)?
        }
    }
    Ok(())
}

/// Labels all seven traits of one sentence with the per-trait prompts.
pub fn label_expert_index_via_llm(
    sentence: &str,
    gateway: &Gateway,
    params: &GenerationParams,
    arity: EventivityArity,
) -> Result<ExpertIndex, ExpertError> {
    let prompts: Vec<PromptSpec> =
        EiTrait::ALL.iter().map(|&t| PromptSpec::new(trait_template(t)).var("sentence", sentence)).collect();
    let mut ei = ExpertIndex::default();
    for (t, reply) in EiTrait::ALL.iter().zip(gateway.complete_many(&prompts, params)) {
        parse_trait_answer(*t, &reply?.text, &mut ei)?;
    }
    ei.eventivity = arity.normalize(ei.eventivity);
    Ok(ei)
}
