//! Append-only record of model exchanges, stored as newline-delimited JSON.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GatewayError, GenerationParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub template_id: String,
    pub system: Option<String>,
    pub rendered_prompt: String,
    pub params: GenerationParams,
    pub response_text: String,
    /// RFC 3339 time the exchange was recorded. Not part of the request hash.
    pub timestamp: String,
}

/// In-memory cassette, optionally backed by a file that receives every append.
#[derive(Debug, Default)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
    by_hash: HashMap<String, usize>,
    path: Option<PathBuf>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a cassette file. A missing file yields an empty cassette bound to
    /// `path`, so recording can start from nothing.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let mut cassette = Cassette { path: Some(path.clone()), ..Default::default() };
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cassette),
            Err(e) => return Err(GatewayError::Cassette(format!("{}: {e}", path.display()))),
        };
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                GatewayError::Cassette(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            cassette.insert(entry)?;
        }
        Ok(cassette)
    }

    /// Parses cassette text without binding it to a file.
    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        let mut cassette = Cassette::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(line)
                .map_err(|e| GatewayError::Cassette(format!("line {}: {e}", lineno + 1)))?;
            cassette.insert(entry)?;
        }
        Ok(cassette)
    }

    fn insert(&mut self, entry: CassetteEntry) -> Result<bool, GatewayError> {
        if let Some(&i) = self.by_hash.get(&entry.request_hash) {
            if self.entries[i].response_text != entry.response_text {
                return Err(GatewayError::Cassette(format!(
                    "conflicting responses recorded for request {}",
                    entry.request_hash
                )));
            }
            return Ok(false);
        }
        self.by_hash.insert(entry.request_hash.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(true)
    }

    pub fn get(&self, request_hash: &str) -> Option<&CassetteEntry> {
        self.by_hash.get(request_hash).map(|&i| &self.entries[i])
    }

    /// Appends an entry, writing it through to the backing file when present.
    pub fn append(&mut self, entry: CassetteEntry) -> Result<(), GatewayError> {
        let line = serde_json::to_string(&entry).map_err(|e| GatewayError::Cassette(e.to_string()))?;
        if !self.insert(entry)? {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
            writeln!(f, "{line}").map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Serializes all entries as JSONL.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("cassette entries serialize"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(hash: &str, response: &str) -> CassetteEntry {
        CassetteEntry {
            request_hash: hash.into(),
            template_id: "plain".into(),
            system: None,
            rendered_prompt: "hi".into(),
            params: GenerationParams::default(),
            response_text: response.into(),
            timestamp: "2026-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn append_writes_through_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut c = Cassette::open(&path).unwrap();
        assert!(c.is_empty());
        c.append(entry("h1", "one")).unwrap();
        c.append(entry("h2", "two")).unwrap();
        c.append(entry("h1", "one")).unwrap();
        let back = Cassette::open(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("h2").unwrap().response_text, "two");
    }

    #[test]
    fn conflicting_duplicate_rejected() {
        let mut c = Cassette::new();
        c.append(entry("h1", "one")).unwrap();
        assert!(c.append(entry("h1", "other")).is_err());
    }
}
