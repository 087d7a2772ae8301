//! Versioned pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::expert::FeatureTrainConfig;
use crate::graph::BuildConfig;
use crate::learn::{GbdtParams, HeadKind, SoftmaxParams};
use crate::llm::{GatewayMode, GenerationParams};
use crate::model::{Bond, BondSchema, EventivityArity, StacLabel};
use crate::stac::{StacTrainConfig, StacVariant};
use crate::vertex::ExtractionConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub mode: GatewayMode,
    pub base_url: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub concurrency: usize,
    pub timeout_secs: u64,
    /// Cassette file; defaults to `cassettes/<narrative id>.jsonl` in the workspace.
    pub cassette: Option<PathBuf>,
    /// Models used for rubric scoring; defaults to `model`.
    pub judge_models: Vec<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let d = GenerationParams::default();
        LlmConfig {
            mode: GatewayMode::Replay,
            base_url: None,
            model: d.model_name,
            temperature: d.temperature,
            max_tokens: d.max_tokens,
            seed: d.seed,
            concurrency: 4,
            timeout_secs: 120,
            cassette: None,
            judge_models: Vec::new(),
        }
    }
}

impl LlmConfig {
    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            model_name: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }

    pub fn judge_params(&self) -> Vec<GenerationParams> {
        if self.judge_models.is_empty() {
            return vec![self.params()];
        }
        self.judge_models.iter().map(|m| GenerationParams { model_name: m.clone(), ..self.params() }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub encoder: EncoderKind,
    /// Base URL of the embedding service; falls back to `NCG_EMBED_URL`.
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    pub eventivity_arity: EventivityArity,
    /// Replaces the default bond allowlist, e.g. `["S->T", "A->C"]`.
    pub bonds: Option<Vec<String>>,
}

impl SchemaConfig {
    pub fn bond_schema(&self) -> Result<BondSchema, ConfigError> {
        match &self.bonds {
            None => Ok(BondSchema::default()),
            Some(list) => Ok(BondSchema::new(list.iter().map(|s| parse_bond(s)).collect::<Result<Vec<_>, _>>()?)),
        }
    }
}

/// Parses `A->C`, `A→C` or `Action -> Consequence`.
pub fn parse_bond(s: &str) -> Result<Bond, ConfigError> {
    let (f, t) = s
        .split_once("->")
        .or_else(|| s.split_once('→'))
        .ok_or_else(|| ConfigError::Invalid(format!("bond {s:?} must look like A->C")))?;
    let label = |x: &str| StacLabel::from_str(x.trim()).map_err(|e| ConfigError::Invalid(format!("bond {s:?}: {e}")));
    Ok(Bond(label(f)?, label(t)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Annotated CSV used by `train` and `--train-first`.
    pub dataset: Option<PathBuf>,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub feature_head: HeadKind,
    pub stac_variant: StacVariant,
    pub gbdt: GbdtParams,
    pub softmax: SoftmaxParams,
    /// Seeds for `ablate`.
    pub ablation_seeds: Vec<u64>,
    pub ablation_variants: Vec<StacVariant>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dataset: None,
            split_seed: 0,
            test_fraction: 0.2,
            feature_head: HeadKind::Tree,
            stac_variant: StacVariant::TreeCombined,
            gbdt: GbdtParams::default(),
            softmax: SoftmaxParams::default(),
            ablation_seeds: (0..20).collect(),
            ablation_variants: StacVariant::ALL[..5].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub llm: LlmConfig,
    pub embedding: EmbeddingConfig,
    pub schema: SchemaConfig,
    pub max_vertices: usize,
    pub max_refinement_rounds: usize,
    pub training: TrainingConfig,
    /// Use annotated Expert Index values instead of predictions when labeling.
    pub gold_ei: bool,
    pub judge_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            llm: LlmConfig::default(),
            embedding: EmbeddingConfig::default(),
            schema: SchemaConfig::default(),
            max_vertices: 40,
            max_refinement_rounds: 2,
            training: TrainingConfig::default(),
            gold_ei: false,
            judge_seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Read { path: "<config>".into(), message: e.to_string() })?;
        if cfg.version != CONFIG_VERSION {
            return Err(ConfigError::Version(cfg.version));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Read { message, .. } => ConfigError::Read { path: path.display().to_string(), message },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        resolve(&mut cfg.llm.cassette);
        resolve(&mut cfg.training.dataset);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_vertices == 0 {
            return Err(ConfigError::Invalid("max_vertices must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.training.test_fraction) {
            return Err(ConfigError::Invalid("training.test_fraction must be in [0, 1)".into()));
        }
        if self.llm.concurrency == 0 {
            return Err(ConfigError::Invalid("llm.concurrency must be at least 1".into()));
        }
        if self.schema.bond_schema()?.is_empty() {
            return Err(ConfigError::Invalid("bond schema is empty".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of every setting that can change pipeline outputs. Execution knobs
    /// (mode, concurrency, timeout, endpoint URLs, file locations) are left
    /// out so that a replay matches the run that recorded it.
    pub fn fingerprint(&self) -> String {
        let semantic = serde_json::json!({
            "version": self.version,
            "params": self.llm.params(),
            "judge_models": self.llm.judge_params().iter().map(|p| p.model_name.clone()).collect::<Vec<_>>(),
            "encoder": self.embedding.encoder,
            "eventivity_arity": self.schema.eventivity_arity,
            "bonds": self.schema.bond_schema().map(|s| s.bonds().map(|b| b.short()).collect::<Vec<_>>()).unwrap_or_default(),
            "max_vertices": self.max_vertices,
            "max_refinement_rounds": self.max_refinement_rounds,
            "training": {
                "split_seed": self.training.split_seed,
                "test_fraction": self.training.test_fraction,
                "feature_head": self.training.feature_head,
                "stac_variant": self.training.stac_variant,
                "gbdt": self.training.gbdt,
                "softmax": self.training.softmax,
            },
            "gold_ei": self.gold_ei,
            "judge_seed": self.judge_seed,
        });
        hex::encode(Sha256::digest(semantic.to_string().as_bytes()))
    }

    pub fn extraction(&self) -> ExtractionConfig {
        ExtractionConfig { max_vertices: self.max_vertices, params: self.llm.params() }
    }

    pub fn build(&self) -> BuildConfig {
        BuildConfig { max_rounds: self.max_refinement_rounds, params: self.llm.params() }
    }

    pub fn feature_training(&self, test_fraction: f64) -> FeatureTrainConfig {
        FeatureTrainConfig {
            head: self.training.feature_head,
            gbdt: self.training.gbdt.clone(),
            softmax: self.training.softmax.clone(),
            test_fraction,
            arity: self.schema.eventivity_arity,
        }
    }

    pub fn stac_training(&self, test_fraction: f64) -> StacTrainConfig {
        StacTrainConfig {
            gbdt: self.training.gbdt.clone(),
            softmax: self.training.softmax.clone(),
            test_fraction,
            arity: self.schema.eventivity_arity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fingerprint(), c.fingerprint());
    }

    #[test]
    fn partial_file_and_overrides() {
        let c = PipelineConfig::from_toml(
            "version = 1\nmax_vertices = 12\n[llm]\nmode = \"live\"\nmodel = \"m\"\n[schema]\nbonds = [\"A->C\", \"Situation → Task\"]\n",
        )
        .unwrap();
        assert_eq!(c.max_vertices, 12);
        assert_eq!(c.llm.mode, GatewayMode::Live);
        let s = c.schema.bond_schema().unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.allows(StacLabel::Situation, StacLabel::Task));
    }

    #[test]
    fn fingerprint_ignores_execution_knobs() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.llm.mode = GatewayMode::Record;
        b.llm.concurrency = 1;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.max_vertices = 5;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(PipelineConfig::from_toml("version = 2"), Err(ConfigError::Version(2))));
        assert!(PipelineConfig::from_toml("version = 1\nbogus = 3").is_err());
        assert!(PipelineConfig::from_toml("version = 1\n[schema]\nbonds = []").is_err());
        assert!(PipelineConfig::from_toml("version = 1\n[schema]\nbonds = [\"A-C\"]").is_err());
    }
}
