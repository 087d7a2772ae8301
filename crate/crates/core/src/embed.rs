//! Sentence embeddings: a deterministic mock encoder, an HTTP client for the
//! embedding service, and a binary on-disk cache.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EMBEDDING_DIM: usize = 768;
pub const MAX_BATCH: usize = 256;
pub const MAX_TEXT_CHARS: usize = 8192;
pub const EMBED_URL_ENV: &str = "NCG_EMBED_URL";
pub const MOCK_ENCODER_ID: &str = "mock-sha256-chacha8-v1";

const CACHE_MAGIC: &[u8; 4] = b"NCGE";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding has {0} values, expected {EMBEDDING_DIM}")]
    WrongDimension(usize),
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("invalid embed request: {0}")]
    InvalidRequest(String),
    #[error("embedding service error: {0}")]
    Service(String),
    #[error("embedding cache: {0}")]
    Cache(String),
}

/// Hash of (encoder id, text), identifying the input an embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(encoder_id: &str, text: &str) -> Self {
        let mut h = Sha256::new();
        h.update((encoder_id.len() as u64).to_le_bytes());
        h.update(encoder_id.as_bytes());
        h.update(text.as_bytes());
        Fingerprint(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| serde::de::Error::custom("fingerprint must be 32 bytes"))?;
        Ok(Fingerprint(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding {
    pub vector: Vec<f32>,
    pub source_fingerprint: Fingerprint,
}

impl SentenceEmbedding {
    pub fn new(vector: Vec<f32>, source_fingerprint: Fingerprint) -> Result<Self, EmbedError> {
        if vector.len() != EMBEDDING_DIM {
            return Err(EmbedError::WrongDimension(vector.len()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(SentenceEmbedding { vector, source_fingerprint })
    }

    pub fn matches(&self, encoder_id: &str, text: &str) -> bool {
        self.source_fingerprint == Fingerprint::of(encoder_id, text)
    }
}

pub trait Embedder: Send + Sync {
    fn encoder_id(&self) -> &str;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<SentenceEmbedding>, EmbedError>;

    fn embed(&self, text: &str) -> Result<SentenceEmbedding, EmbedError> {
        Ok(self.embed_batch(&[text.to_string()])?.remove(0))
    }
}

fn check_batch(texts: &[String]) -> Result<(), EmbedError> {
    if texts.is_empty() || texts.len() > MAX_BATCH {
        return Err(EmbedError::InvalidRequest(format!("batch of {} texts (allowed 1..={MAX_BATCH})", texts.len())));
    }
    for t in texts {
        if t.is_empty() || t.chars().count() > MAX_TEXT_CHARS {
            return Err(EmbedError::InvalidRequest(format!("text length {} outside 1..={MAX_TEXT_CHARS}", t.chars().count())));
        }
    }
    Ok(())
}

/// Expands a hash of the text into uniform values in [-1, 1]. Carries no
/// semantics; identical text always gives an identical vector.
#[derive(Debug, Clone, Default)]
pub struct MockEmbedder;

impl MockEmbedder {
    pub fn vector_for(text: &str) -> Vec<f32> {
        let fp = Fingerprint::of(MOCK_ENCODER_ID, text);
        let mut rng = ChaCha8Rng::from_seed(fp.0);
        (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0f32..=1.0)).collect()
    }
}

impl Embedder for MockEmbedder {
    fn encoder_id(&self) -> &str {
        MOCK_ENCODER_ID
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<SentenceEmbedding>, EmbedError> {
        check_batch(texts)?;
        texts
            .iter()
            .map(|t| SentenceEmbedding::new(Self::vector_for(t), Fingerprint::of(MOCK_ENCODER_ID, t)))
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
    encoder_id: String,
    dim: usize,
}

#[derive(Deserialize)]
struct HealthResponse {
    encoder_id: String,
    dim: usize,
}

/// Client for `POST {base}/embed`. The encoder id is taken from
/// `GET {base}/health` at connect time and checked on every response.
pub struct HttpEmbedder {
    base_url: String,
    encoder_id: String,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn connect(base_url: impl Into<String>, timeout: Duration) -> Result<Self, EmbedError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .get(&format!("{base_url}/health"))
            .call()
            .map_err(|e| EmbedError::Service(e.to_string()))?;
        if resp.status().as_u16() != 200 {
            return Err(EmbedError::Service(format!("health check returned {}", resp.status())));
        }
        let health: HealthResponse =
            resp.body_mut().read_json().map_err(|e| EmbedError::Service(format!("health body: {e}")))?;
        if health.dim != EMBEDDING_DIM {
            return Err(EmbedError::WrongDimension(health.dim));
        }
        Ok(HttpEmbedder { base_url, encoder_id: health.encoder_id, agent })
    }

    /// Connects to the service named by `NCG_EMBED_URL`, if set.
    pub fn from_env(timeout: Duration) -> Option<Result<Self, EmbedError>> {
        let url = std::env::var(EMBED_URL_ENV).ok().filter(|u| !u.trim().is_empty())?;
        Some(Self::connect(url, timeout))
    }
}

impl Embedder for HttpEmbedder {
    fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<SentenceEmbedding>, EmbedError> {
        check_batch(texts)?;
        let mut resp = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbedError::Service(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(EmbedError::Service(format!("status {status}: {body}")));
        }
        let parsed: EmbedResponse =
            resp.body_mut().read_json().map_err(|e| EmbedError::Service(format!("malformed body: {e}")))?;
        if parsed.dim != EMBEDDING_DIM {
            return Err(EmbedError::WrongDimension(parsed.dim));
        }
        if parsed.encoder_id != self.encoder_id {
            return Err(EmbedError::Service(format!(
                "encoder changed from {} to {}",
                self.encoder_id, parsed.encoder_id
            )));
        }
        if parsed.vectors.len() != texts.len() {
            return Err(EmbedError::Service(format!("{} vectors for {} texts", parsed.vectors.len(), texts.len())));
        }
        parsed
            .vectors
            .into_iter()
            .zip(texts)
            .map(|(v, t)| SentenceEmbedding::new(v, Fingerprint::of(&self.encoder_id, t)))
            .collect()
    }
}

/// Fingerprint-keyed store of embeddings.
///
/// File layout (little-endian): `NCGE`, u32 version, u32 dim, u64 count, then
/// per entry 32 fingerprint bytes followed by `dim` f32 values.
#[derive(Debug, Default, Clone)]
pub struct EmbeddingCache {
    entries: HashMap<Fingerprint, Vec<f32>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, fp: &Fingerprint) -> Option<SentenceEmbedding> {
        self.entries.get(fp).map(|v| SentenceEmbedding { vector: v.clone(), source_fingerprint: *fp })
    }

    pub fn insert(&mut self, e: &SentenceEmbedding) {
        self.entries.insert(e.source_fingerprint, e.vector.clone());
    }

    /// Embeds `texts`, calling the encoder only for texts not already cached.
    pub fn embed_all(&mut self, embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<SentenceEmbedding>, EmbedError> {
        let id = embedder.encoder_id().to_string();
        let fps: Vec<Fingerprint> = texts.iter().map(|t| Fingerprint::of(&id, t)).collect();
        let mut missing: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (t, fp) in texts.iter().zip(&fps) {
            if !self.entries.contains_key(fp) && seen.insert(*fp) {
                missing.push(t.clone());
            }
        }
        for chunk in missing.chunks(MAX_BATCH) {
            for e in embedder.embed_batch(chunk)? {
                self.insert(&e);
            }
        }
        Ok(fps.iter().map(|fp| self.get(fp).expect("embedded above")).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut keys: Vec<&Fingerprint> = self.entries.keys().collect();
        keys.sort();
        let mut out = Vec::with_capacity(20 + keys.len() * (32 + 4 * EMBEDDING_DIM));
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(EMBEDDING_DIM as u32).to_le_bytes());
        out.extend_from_slice(&(keys.len() as u64).to_le_bytes());
        for k in keys {
            out.extend_from_slice(&k.0);
            for v in &self.entries[k] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, EmbedError> {
        let err = |m: &str| EmbedError::Cache(m.to_string());
        let mut header = [0u8; 20];
        bytes.read_exact(&mut header).map_err(|_| err("truncated header"))?;
        if &header[0..4] != CACHE_MAGIC {
            return Err(err("bad magic"));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(EmbedError::Cache(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if dim != EMBEDDING_DIM {
            return Err(EmbedError::WrongDimension(dim));
        }
        let count = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        if bytes.len() != count * (32 + 4 * dim) {
            return Err(err("length does not match entry count"));
        }
        let mut cache = EmbeddingCache::new();
        for rec in bytes.chunks_exact(32 + 4 * dim) {
            let fp = Fingerprint(rec[..32].try_into().unwrap());
            let v: Vec<f32> = rec[32..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            cache.entries.insert(fp, v);
        }
        Ok(cache)
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        match std::fs::File::open(path) {
            Ok(mut f) => {
                let mut buf = Vec::new();
                f.read_to_end(&mut buf).map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))?;
                Self::from_bytes(&buf)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(EmbedError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let mut f = std::fs::File::create(path).map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))?;
        f.write_all(&self.to_bytes()).map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic_and_shaped() {
        let m = MockEmbedder;
        let out = m.embed_batch(&["a".into(), "a".into(), "b".into()]).unwrap();
        assert_eq!(out[0].vector.len(), EMBEDDING_DIM);
        assert_eq!(out[0], out[1]);
        assert_ne!(out[0].vector, out[2].vector);
        assert!(out[0].matches(MOCK_ENCODER_ID, "a"));
        assert!(!out[0].matches(MOCK_ENCODER_ID, "b"));
    }

    #[test]
    fn batch_limits() {
        let m = MockEmbedder;
        assert!(m.embed_batch(&[]).is_err());
        assert!(m.embed_batch(&vec!["x".to_string(); MAX_BATCH + 1]).is_err());
        assert!(m.embed_batch(&["".into()]).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let mut c = EmbeddingCache::new();
        let texts: Vec<String> = (0..300).map(|i| format!("sentence {i}")).collect();
        let first = c.embed_all(&MockEmbedder, &texts).unwrap();
        assert_eq!(c.len(), 300);
        let back = EmbeddingCache::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), c.to_bytes());
        assert_eq!(back.get(&first[7].source_fingerprint).unwrap(), first[7]);
        let mut bad = c.to_bytes();
        bad[0] = b'X';
        assert!(EmbeddingCache::from_bytes(&bad).is_err());
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(matches!(
            SentenceEmbedding::new(vec![0.0; 3], Fingerprint::of("x", "y")),
            Err(EmbedError::WrongDimension(3))
        ));
        assert!(matches!(
            SentenceEmbedding::new(vec![f32::NAN; EMBEDDING_DIM], Fingerprint::of("x", "y")),
            Err(EmbedError::NonFinite)
        ));
    }
}
