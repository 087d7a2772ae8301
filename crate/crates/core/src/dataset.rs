//! Annotated sentence datasets: CSV loading and embedding attachment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbedError, Embedder, EmbeddingCache, SentenceEmbedding};
use crate::model::{EiTrait, ExpertIndex, StacLabel};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Row { path: String, line: u64, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// One annotated sentence before embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedRow {
    pub text: String,
    pub expert_index: ExpertIndex,
    pub stac: Option<StacLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub text: String,
    pub embedding: SentenceEmbedding,
    pub expert_index: ExpertIndex,
    pub stac: Option<StacLabel>,
}

fn normalize_header(h: &str) -> String {
    h.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

/// Reads a CSV with a `text` column, one column per trait (named by trait
/// key) and an optional `stac` column. Column order is free.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedRow>, DatasetError> {
    let p = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DatasetError::Read { path: p.clone(), message: e.to_string() })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DatasetError::Read { path: p.clone(), message: e.to_string() })?
        .iter()
        .map(normalize_header)
        .collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let text_col = find("text").ok_or_else(|| DatasetError::Read { path: p.clone(), message: "missing column text".into() })?;
    let mut trait_cols = Vec::with_capacity(7);
    for t in EiTrait::ALL {
        let col = headers
            .iter()
            .position(|h| h.parse::<EiTrait>().ok() == Some(t))
            .ok_or_else(|| DatasetError::Read { path: p.clone(), message: format!("missing column {}", t.key()) })?;
        trait_cols.push((t, col));
    }
    let stac_col = find("stac");

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatasetError::Read { path: p.clone(), message: e.to_string() })?;
        let line = rec.position().map_or(0, |pos| pos.line());
        let row_err = |message: String| DatasetError::Row { path: p.clone(), line, message };
        let text = rec.get(text_col).unwrap_or("").to_string();
        if text.is_empty() {
            return Err(row_err("empty text".into()));
        }
        let mut ei = ExpertIndex::default();
        for &(t, col) in &trait_cols {
            ei.set_from_str(t, rec.get(col).unwrap_or("")).map_err(|e| row_err(e.to_string()))?;
        }
        let stac = match stac_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<StacLabel>().map_err(|e| row_err(e.to_string()))?),
            None => None,
        };
        rows.push(AnnotatedRow { text, expert_index: ei, stac });
    }
    Ok(rows)
}

pub fn write_annotations(path: &Path, rows: &[AnnotatedRow]) -> Result<(), DatasetError> {
    let p = path.display().to_string();
    let io = |e: csv::Error| DatasetError::Read { path: p.clone(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["text"];
    header.extend(EiTrait::ALL.iter().map(|t| t.key()));
    header.push("stac");
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.text.clone()];
        rec.extend(EiTrait::ALL.iter().map(|&t| r.expert_index.category_name(t, crate::model::EventivityArity::Three).to_string()));
        rec.push(r.stac.map(|s| s.as_str().to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| DatasetError::Read { path: p.clone(), message: e.to_string() })
}

/// Embeds every row's text through the cache.
pub fn attach_embeddings(
    rows: &[AnnotatedRow],
    embedder: &dyn Embedder,
    cache: &mut EmbeddingCache,
) -> Result<Vec<LabeledSentence>, DatasetError> {
    let texts: Vec<String> = rows.iter().map(|r| r.text.clone()).collect();
    let embeddings = cache.embed_all(embedder, &texts)?;
    Ok(rows
        .iter()
        .zip(embeddings)
        .map(|(r, embedding)| LabeledSentence {
            text: r.text.clone(),
            embedding,
            expert_index: r.expert_index,
            stac: r.stac,
        })
        .collect())
}
