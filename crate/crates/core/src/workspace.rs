//! On-disk workspace: directory layout, run lock, and stage fingerprints.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SUBDIRS: [&str; 7] = ["corpus", "vertices", "models", "graphs", "traces", "cassettes", "reports"];
const LOCK_FILE: &str = ".lock";

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("workspace {0} is locked by another run (remove .lock if that run died)")]
    Locked(String),
    #[error("corpus already holds a different {0}")]
    Conflict(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> WorkspaceError + '_ {
    move |e| WorkspaceError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, WorkspaceError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkspaceLayout {
    pub root: PathBuf,
}

impl WorkspaceLayout {
    /// Creates the root and every subdirectory if missing.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let layout = WorkspaceLayout { root: root.into() };
        for d in SUBDIRS {
            let p = layout.root.join(d);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(layout)
    }

    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn corpus(&self, id: &str) -> PathBuf {
        self.dir("corpus").join(format!("{id}.txt"))
    }
    pub fn extraction(&self, id: &str) -> PathBuf {
        self.dir("vertices").join(format!("{id}.extraction.json"))
    }
    pub fn embeddings(&self, id: &str) -> PathBuf {
        self.dir("vertices").join(format!("{id}.embeddings.bin"))
    }
    pub fn labeled(&self, id: &str) -> PathBuf {
        self.dir("vertices").join(format!("{id}.labeled.json"))
    }
    pub fn feature_models(&self) -> PathBuf {
        self.dir("models").join("features.json")
    }
    pub fn stac_model(&self) -> PathBuf {
        self.dir("models").join("stac.json")
    }
    pub fn dataset_embeddings(&self) -> PathBuf {
        self.dir("models").join("dataset.embeddings.bin")
    }
    pub fn graph(&self, id: &str) -> PathBuf {
        self.dir("graphs").join(format!("{id}.graph.json"))
    }
    pub fn dot(&self, id: &str) -> PathBuf {
        self.dir("graphs").join(format!("{id}.dot"))
    }
    pub fn trace(&self, id: &str) -> PathBuf {
        self.dir("traces").join(format!("{id}.trace.json"))
    }
    pub fn cassette(&self, id: &str) -> PathBuf {
        self.dir("cassettes").join(format!("{id}.jsonl"))
    }
    pub fn manifest(&self, id: &str) -> PathBuf {
        self.dir("reports").join(format!("{id}.manifest.json"))
    }
    pub fn report(&self, name: &str) -> PathBuf {
        self.dir("reports").join(name)
    }
    fn stages_file(&self, scope: &str) -> PathBuf {
        self.dir("reports").join(format!("{scope}.stages.json"))
    }

    /// Takes the workspace lock for the lifetime of the returned guard.
    pub fn lock(&self) -> Result<WorkspaceLock, WorkspaceError> {
        let path = self.root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(WorkspaceError::Locked(self.root.display().to_string()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Copies a narrative into `corpus/`. Identical content is a no-op;
    /// different content under the same id is refused.
    pub fn ingest(&self, id: &str, body: &str) -> Result<PathBuf, WorkspaceError> {
        let path = self.corpus(id);
        match fs::read_to_string(&path) {
            Ok(existing) if existing == body => return Ok(path),
            Ok(_) => return Err(WorkspaceError::Conflict(format!("narrative {id:?}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&path)(e)),
        }
        write_atomic(&path, body.as_bytes())?;
        Ok(path)
    }

    pub fn load_stages(&self, scope: &str) -> StageLedger {
        fs::read_to_string(self.stages_file(scope))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    pub fn save_stages(&self, scope: &str, ledger: &StageLedger) -> Result<(), WorkspaceError> {
        let text = serde_json::to_string_pretty(ledger).expect("ledger serializes");
        write_atomic(&self.stages_file(scope), text.as_bytes())
    }
}

/// Removes the lock file on drop.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), WorkspaceError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or_default()
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// What a stage consumed and produced the last time it ran.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    /// Output path (relative to the workspace root) to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageLedger {
    pub stages: BTreeMap<String, StageRecord>,
}

impl StageLedger {
    /// True when `stage` last ran with `fingerprint` and all of its outputs
    /// are still on disk unchanged.
    pub fn is_fresh(&self, layout: &WorkspaceLayout, stage: &str, fingerprint: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else { return false };
        rec.fingerprint == fingerprint
            && rec
                .outputs
                .iter()
                .all(|(rel, sha)| file_sha256(&layout.root.join(rel)).ok().as_deref() == Some(sha.as_str()))
    }

    pub fn record(
        &mut self,
        layout: &WorkspaceLayout,
        stage: &str,
        fingerprint: String,
        outputs: &[&Path],
    ) -> Result<(), WorkspaceError> {
        let mut map = BTreeMap::new();
        for p in outputs {
            let rel = p.strip_prefix(&layout.root).unwrap_or(p);
            map.insert(rel.to_string_lossy().replace('\\', "/"), file_sha256(p)?);
        }
        self.stages.insert(stage.to_string(), StageRecord { fingerprint, outputs: map });
        Ok(())
    }
}

/// Hash of a stage name and its ordered inputs.
pub fn stage_fingerprint(stage: &str, inputs: &[&str]) -> String {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    for i in inputs {
        h.update([0u8]);
        h.update(i.as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_lock_and_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let ws = WorkspaceLayout::create(dir.path().join("ws")).unwrap();
        for d in SUBDIRS {
            assert!(ws.dir(d).is_dir());
        }
        let guard = ws.lock().unwrap();
        assert!(matches!(ws.lock(), Err(WorkspaceError::Locked(_))));
        drop(guard);
        ws.lock().unwrap();

        ws.ingest("tale", "Once.").unwrap();
        ws.ingest("tale", "Once.").unwrap();
        assert!(matches!(ws.ingest("tale", "Twice."), Err(WorkspaceError::Conflict(_))));
        assert_eq!(fs::read_to_string(ws.corpus("tale")).unwrap(), "Once.");
    }

    #[test]
    fn stage_freshness_tracks_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let ws = WorkspaceLayout::create(dir.path()).unwrap();
        let out = ws.graph("g");
        write_atomic(&out, b"{}").unwrap();
        let fp = stage_fingerprint("graph", &["a", "b"]);
        assert_ne!(fp, stage_fingerprint("graph", &["ab"]));
        let mut ledger = StageLedger::default();
        ledger.record(&ws, "graph", fp.clone(), &[&out]).unwrap();
        ws.save_stages("g", &ledger).unwrap();
        let ledger = ws.load_stages("g");
        assert!(ledger.is_fresh(&ws, "graph", &fp));
        assert!(!ledger.is_fresh(&ws, "graph", "other"));
        write_atomic(&out, b"{ }").unwrap();
        assert!(!ledger.is_fresh(&ws, "graph", &fp));
    }
}
