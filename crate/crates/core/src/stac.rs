//! STAC classification from embeddings and Expert Index features, model-based
//! classification, and the six-variant ablation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::answer::single_keyword;
use crate::dataset::LabeledSentence;
use crate::embed::{SentenceEmbedding, EMBEDDING_DIM};
use crate::eval::{classification_metrics_with, EvalError};
use crate::expert::{encode_one_hot_with, one_hot_width};
use crate::learn::{Classifier, DataSplit, GbdtParams, HeadKind, LearnError, SoftmaxParams};
use crate::llm::{catalog, Gateway, GatewayError, GenerationParams, PromptSpec};
use crate::model::{EiTrait, EventivityArity, ExpertIndex, StacLabel};

pub const STAC_MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StacError {
    #[error("feature layout mismatch: {0}")]
    Contract(String),
    #[error("degenerate training data: {0}")]
    Degenerate(String),
    #[error("cannot read a STAC label from {raw:?}")]
    Parse { raw: String },
    #[error("stac model file {path}: {message}")]
    Artifact { path: String, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLayout {
    EmbeddingOnly,
    EiOnly,
    Combined,
}

impl FeatureLayout {
    pub fn len(self, arity: EventivityArity) -> usize {
        match self {
            FeatureLayout::EmbeddingOnly => EMBEDDING_DIM,
            FeatureLayout::EiOnly => one_hot_width(arity),
            FeatureLayout::Combined => EMBEDDING_DIM + one_hot_width(arity),
        }
    }

    pub fn uses_ei(self) -> bool {
        self != FeatureLayout::EmbeddingOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StacFeatureVector {
    pub values: Vec<f32>,
    pub layout: FeatureLayout,
}

/// Default schema version of [`build_feature_vector_with`].
pub fn build_feature_vector(
    embedding: &SentenceEmbedding,
    ei: Option<&ExpertIndex>,
    layout: FeatureLayout,
) -> Result<StacFeatureVector, StacError> {
    build_feature_vector_with(embedding, ei, layout, EventivityArity::Two)
}

/// Lays out features as embedding values, then the one-hot Expert Index block.
pub fn build_feature_vector_with(
    embedding: &SentenceEmbedding,
    ei: Option<&ExpertIndex>,
    layout: FeatureLayout,
    arity: EventivityArity,
) -> Result<StacFeatureVector, StacError> {
    if embedding.vector.len() != EMBEDDING_DIM {
        return Err(StacError::Contract(format!("embedding has {} values", embedding.vector.len())));
    }
    let values = match (layout, ei) {
        (FeatureLayout::EmbeddingOnly, _) => embedding.vector.clone(),
        (FeatureLayout::EiOnly, Some(ei)) => encode_one_hot_with(ei, arity),
        (FeatureLayout::Combined, Some(ei)) => {
            let mut v = embedding.vector.clone();
            v.extend(encode_one_hot_with(ei, arity));
            v
        }
        (l, None) => return Err(StacError::Contract(format!("layout {l:?} needs an Expert Index"))),
    };
    Ok(StacFeatureVector { values, layout })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StacVariant {
    LinearEmbed,
    LinearCombined,
    TreeEiOnly,
    TreeEmbed,
    TreeCombined,
    PromptBased,
}

impl StacVariant {
    pub const ALL: [StacVariant; 6] = [
        StacVariant::LinearEmbed,
        StacVariant::LinearCombined,
        StacVariant::TreeEiOnly,
        StacVariant::TreeEmbed,
        StacVariant::TreeCombined,
        StacVariant::PromptBased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StacVariant::LinearEmbed => "linear-embed",
            StacVariant::LinearCombined => "linear-combined",
            StacVariant::TreeEiOnly => "tree-ei-only",
            StacVariant::TreeEmbed => "tree-embed",
            StacVariant::TreeCombined => "tree-combined",
            StacVariant::PromptBased => "prompt-based",
        }
    }

    pub fn layout(self) -> Option<FeatureLayout> {
        match self {
            StacVariant::LinearEmbed | StacVariant::TreeEmbed => Some(FeatureLayout::EmbeddingOnly),
            StacVariant::LinearCombined | StacVariant::TreeCombined => Some(FeatureLayout::Combined),
            StacVariant::TreeEiOnly => Some(FeatureLayout::EiOnly),
            StacVariant::PromptBased => None,
        }
    }

    pub fn head(self) -> Option<HeadKind> {
        match self {
            StacVariant::LinearEmbed | StacVariant::LinearCombined => Some(HeadKind::Linear),
            StacVariant::TreeEiOnly | StacVariant::TreeEmbed | StacVariant::TreeCombined => Some(HeadKind::Tree),
            StacVariant::PromptBased => None,
        }
    }
}

impl fmt::Display for StacVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StacVariant {
    type Err = StacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = s.trim().to_ascii_lowercase().replace('_', "-");
        StacVariant::ALL
            .into_iter()
            .find(|v| v.name() == k)
            .ok_or_else(|| StacError::Contract(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StacTrainConfig {
    pub gbdt: GbdtParams,
    pub softmax: SoftmaxParams,
    pub test_fraction: f64,
    pub arity: EventivityArity,
}

impl Default for StacTrainConfig {
    fn default() -> Self {
        StacTrainConfig {
            gbdt: GbdtParams::default(),
            softmax: SoftmaxParams::default(),
            test_fraction: 0.2,
            arity: EventivityArity::Two,
        }
    }
}

/// A trained STAC classifier. The feature layout is part of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StacModel {
    pub version: u32,
    pub variant: StacVariant,
    pub arity: EventivityArity,
    /// Class order of the classifier outputs.
    pub classes: Vec<StacLabel>,
    /// Absent for the prompt-based variant.
    pub classifier: Option<Classifier>,
    pub split: Option<DataSplit>,
}

impl StacModel {
    /// A model that defers to the language model at prediction time.
    pub fn prompt_based() -> Self {
        StacModel {
            version: STAC_MODEL_VERSION,
            variant: StacVariant::PromptBased,
            arity: EventivityArity::Two,
            classes: StacLabel::ALL.to_vec(),
            classifier: None,
            split: None,
        }
    }

    pub fn layout(&self) -> Option<FeatureLayout> {
        self.variant.layout()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stac model serializes") + "\n"
    }

    pub fn load(path: &std::path::Path) -> Result<Self, StacError> {
        let err = |message: String| StacError::Artifact { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let m: StacModel = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if m.version != STAC_MODEL_VERSION {
            return Err(err(format!("unsupported version {}", m.version)));
        }
        Ok(m)
    }
}

fn features_for(
    data: &[LabeledSentence],
    rows: &[usize],
    layout: FeatureLayout,
    arity: EventivityArity,
) -> Result<Vec<Vec<f32>>, StacError> {
    rows.iter()
        .map(|&i| build_feature_vector_with(&data[i].embedding, Some(&data[i].expert_index), layout, arity).map(|f| f.values))
        .collect()
}

pub fn train_stac(data: &[LabeledSentence], variant: StacVariant, split_seed: u64) -> Result<StacModel, StacError> {
    train_stac_with(data, variant, split_seed, &StacTrainConfig::default())
}

/// Trains on the training part of a seeded split using each row's own
/// Expert Index for the EI block.
pub fn train_stac_with(
    data: &[LabeledSentence],
    variant: StacVariant,
    split_seed: u64,
    config: &StacTrainConfig,
) -> Result<StacModel, StacError> {
    let (Some(layout), Some(head)) = (variant.layout(), variant.head()) else {
        return Err(StacError::Contract("the prompt-based variant is not trained".into()));
    };
    let split = DataSplit::new(data.len(), config.test_fraction, split_seed);
    let mut y = Vec::with_capacity(split.train.len());
    for &i in &split.train {
        let label = data[i].stac.ok_or_else(|| StacError::Degenerate(format!("row {i} has no STAC label")))?;
        y.push(label.index());
    }
    let missing: Vec<&str> = StacLabel::ALL.iter().filter(|l| !y.contains(&l.index())).map(|l| l.as_str()).collect();
    if !missing.is_empty() {
        return Err(StacError::Degenerate(format!("training split lacks {}", missing.join(", "))));
    }
    let x = features_for(data, &split.train, layout, config.arity)?;
    let classifier = Classifier::fit(head, &x, &y, 4, &config.gbdt, &config.softmax, split_seed).map_err(|e| match e {
        LearnError::Degenerate(m) => StacError::Degenerate(m),
        LearnError::Width { expected, got } => StacError::Contract(format!("expected {expected} features, got {got}")),
    })?;
    Ok(StacModel {
        version: STAC_MODEL_VERSION,
        variant,
        arity: config.arity,
        classes: StacLabel::ALL.to_vec(),
        classifier: Some(classifier),
        split: Some(split),
    })
}

/// Most probable label; ties go to the earliest label in S, T, A, C order.
pub fn predict_stac(model: &StacModel, features: &StacFeatureVector) -> Result<StacLabel, StacError> {
    let (Some(layout), Some(classifier)) = (model.layout(), model.classifier.as_ref()) else {
        return Err(StacError::Contract("prompt-based model predicts through the gateway".into()));
    };
    if features.layout != layout || features.values.len() != layout.len(model.arity) {
        return Err(StacError::Contract(format!(
            "model {} expects {:?} ({} values), got {:?} ({} values)",
            model.variant,
            layout,
            layout.len(model.arity),
            features.layout,
            features.values.len()
        )));
    }
    let idx = classifier.predict(&features.values).map_err(|e| StacError::Contract(e.to_string()))?;
    Ok(model.classes[idx])
}

/// Builds the model's feature vector for one sentence and predicts.
pub fn predict_stac_sentence(
    model: &StacModel,
    embedding: &SentenceEmbedding,
    ei: Option<&ExpertIndex>,
) -> Result<StacLabel, StacError> {
    let layout = model.layout().ok_or_else(|| StacError::Contract("prompt-based model has no features".into()))?;
    predict_stac(model, &build_feature_vector_with(embedding, ei, layout, model.arity)?)
}

/// Reads a label from a model reply: an exact one-word answer, or a reply in
/// which exactly one label keyword occurs.
pub fn parse_stac_reply(reply: &str) -> Result<StacLabel, StacError> {
    let head = crate::answer::first_line(reply);
    if let Some(l) = StacLabel::ALL.iter().find(|l| l.as_str().eq_ignore_ascii_case(head)) {
        return Ok(*l);
    }
    let table: Vec<(&str, StacLabel)> = StacLabel::ALL.iter().map(|l| (l.as_str(), *l)).collect();
    single_keyword(reply, &table).ok_or_else(|| StacError::Parse { raw: reply.to_string() })
}

pub fn classify_stac_via_llm(sentence: &str, gateway: &Gateway, params: &GenerationParams) -> Result<StacLabel, StacError> {
    let reply = gateway.complete(&PromptSpec::new(catalog::STAC_CLASSIFICATION).var("sentence", sentence), params)?;
    parse_stac_reply(&reply.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: StacVariant,
    /// F1 per label in S, T, A, C order.
    pub f1: [Option<f64>; 4],
    pub macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub dataset_fingerprint: String,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: StacVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn macro_f1(&self, v: StacVariant) -> Option<f64> {
        self.row(v).and_then(|r| r.macro_f1)
    }
}

/// Hash over every row's text, Expert Index and STAC label.
pub fn dataset_fingerprint(data: &[LabeledSentence]) -> String {
    let mut h = Sha256::new();
    for d in data {
        h.update(d.text.as_bytes());
        h.update([0]);
        for t in EiTrait::ALL {
            h.update([d.expert_index.category(t, EventivityArity::Three) as u8]);
        }
        h.update([d.stac.map_or(255, |s| s.index() as u8)]);
    }
    hex::encode(h.finalize())
}

/// Trains and scores each requested variant on the same split, once per seed.
/// The prompt-based variant runs only when a gateway is supplied.
pub fn ablation_run(
    data: &[LabeledSentence],
    seeds: &[u64],
    variants: &[StacVariant],
    config: &StacTrainConfig,
    gateway: Option<(&Gateway, &GenerationParams)>,
) -> Result<Vec<AblationReport>, StacError> {
    let fingerprint = dataset_fingerprint(data);
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let split = DataSplit::new(data.len(), config.test_fraction, seed);
        let gold: Vec<StacLabel> = split
            .test
            .iter()
            .map(|&i| data[i].stac.ok_or_else(|| StacError::Degenerate(format!("row {i} has no STAC label"))))
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::new();
        for &v in variants {
            let predicted: Vec<StacLabel> = if v == StacVariant::PromptBased {
                let Some((gw, params)) = gateway else { continue };
                split.test.iter().map(|&i| classify_stac_via_llm(&data[i].text, gw, params)).collect::<Result<_, _>>()?
            } else {
                let model = train_stac_with(data, v, seed, config)?;
                split
                    .test
                    .iter()
                    .map(|&i| predict_stac_sentence(&model, &data[i].embedding, Some(&data[i].expert_index)))
                    .collect::<Result<_, _>>()?
            };
            let m = classification_metrics_with(&gold, &predicted, &StacLabel::ALL)?;
            let mut f1 = [None; 4];
            for (k, c) in m.classes.iter().enumerate() {
                f1[k] = c.f1;
            }
            rows.push(AblationRow { variant: v, f1, macro_f1: m.macro_f1 });
        }
        reports.push(AblationReport {
            dataset_fingerprint: fingerprint.clone(),
            split_seed: seed,
            n_train: split.train.len(),
            n_test: split.test.len(),
            rows,
        });
    }
    Ok(reports)
}

/// One line per (seed, variant): `seed,variant,S,T,A,C,macro`.
pub fn ablation_csv(reports: &[AblationReport]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("seed,variant,S,T,A,C,macro\n");
    for r in reports {
        for row in &r.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.split_seed,
                row.variant,
                f(row.f1[0]),
                f(row.f1[1]),
                f(row.f1[2]),
                f(row.f1[3]),
                f(row.macro_f1)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{Embedder, MockEmbedder};

    #[test]
    fn feature_vector_layouts() {
        let zero = SentenceEmbedding::new(vec![0.0; EMBEDDING_DIM], crate::embed::Fingerprint::of("z", "z")).unwrap();
        let ei = ExpertIndex::default();
        let c = build_feature_vector(&zero, Some(&ei), FeatureLayout::Combined).unwrap();
        assert_eq!(c.values.len(), 783);
        assert!(c.values[..768].iter().all(|&v| v == 0.0));
        assert_eq!(c.values[768..].iter().sum::<f32>(), 7.0);
        let e = build_feature_vector(&zero, Some(&ei), FeatureLayout::EiOnly).unwrap();
        assert_eq!(e.values, crate::expert::encode_one_hot(&ei));
        assert!(build_feature_vector(&zero, None, FeatureLayout::Combined).is_err());
    }

    #[test]
    fn reply_parsing() {
        assert_eq!(parse_stac_reply("Action").unwrap(), StacLabel::Action);
        assert_eq!(parse_stac_reply("It is a consequence.").unwrap(), StacLabel::Consequence);
        assert!(matches!(parse_stac_reply("no idea"), Err(StacError::Parse { .. })));
        assert!(parse_stac_reply("Task or Action").is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in StacVariant::ALL {
            assert_eq!(v.name().parse::<StacVariant>().unwrap(), v);
        }
    }

    #[test]
    fn missing_label_is_degenerate() {
        let mut data = crate::synth::ei_governed(60, 1);
        for d in &mut data {
            if d.stac == Some(StacLabel::Task) {
                d.stac = Some(StacLabel::Action);
            }
        }
        assert!(matches!(train_stac(&data, StacVariant::TreeEiOnly, 0), Err(StacError::Degenerate(_))));
        assert!(train_stac(&data, StacVariant::PromptBased, 0).is_err());
    }

    #[test]
    fn layout_mismatch_rejected() {
        let data = crate::synth::ei_governed(120, 2);
        let m = train_stac(&data, StacVariant::TreeEiOnly, 0).unwrap();
        let emb = MockEmbedder.embed("x").unwrap();
        let wrong = build_feature_vector(&emb, None, FeatureLayout::EmbeddingOnly).unwrap();
        assert!(matches!(predict_stac(&m, &wrong), Err(StacError::Contract(_))));
    }
}
