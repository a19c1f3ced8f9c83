//! Flat-file storage under a single data directory.
//!
//! Every store is a JSON Lines file except the vector matrix. Writers never
//! modify a visible file in place: content goes to a hidden temporary file in
//! the same directory, is fsynced, and is renamed over the target.

mod atomic;
mod integrity;

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::enrich::Enrichment;
use crate::ingest::{Chunk, Corpus, SessionDocument, SpeakerTurn};

pub use atomic::{AtomicBatch, FAULT_ENV};
pub use integrity::{integrity_check, IntegrityReport};

pub const SCHEMA_VERSION: u32 = 1;

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const TURNS_FILE: &str = "turns.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const ENRICHMENTS_FILE: &str = "enrichments.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const EMBEDDINGS_IDS_FILE: &str = "embeddings.idx.jsonl";
pub const FEEDBACK_FILE: &str = "feedback.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line_no}: {reason}")]
    Malformed {
        path: PathBuf,
        line_no: usize,
        reason: String,
    },
    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("{0} is not an initialized data directory (manifest.json missing)")]
    NotInitialized(PathBuf),
    #[error("{0} already holds a corpus")]
    CorpusExists(PathBuf),
    #[error("invalid vector file {path}: {reason}")]
    VectorFile { path: PathBuf, reason: String },
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Directory-level metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub embedding_model: String,
    pub dim: u32,
    pub prompt_version: String,
    pub built_at: DateTime<Utc>,
    /// Digest of the settings the vector index was built with; empty until an
    /// index exists.
    #[serde(default)]
    pub config_fingerprint: String,
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            embedding_model: String::new(),
            dim: 0,
            prompt_version: String::new(),
            built_at: Utc::now(),
            config_fingerprint: String::new(),
        }
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

/// Digest identifying how an index was built. Serving with different
/// settings must not reuse the index.
pub fn config_fingerprint(embedding_model: &str, dim: usize, retrieval_text: &str, prompt_version: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [embedding_model, &dim.to_string(), retrieval_text, prompt_version] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

/// Serializes records as JSON Lines into `target`, atomically.
pub fn write_store<'a, T, I>(target: &Path, records: I) -> Result<usize, StoreError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut batch = AtomicBatch::new();
    let count = batch.stage_jsonl(target, records)?;
    batch.commit()?;
    Ok(count)
}

/// Reads a JSON Lines store. A missing file reads as empty.
pub fn read_store<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::io(path, e)),
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            path: path.to_path_buf(),
            line_no: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Handle on an initialized data directory.
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    /// Creates the directory and its manifest if needed.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        let dir = Self { root };
        if !dir.path(MANIFEST_FILE).exists() {
            dir.write_manifest(&Manifest::new())?;
        } else {
            dir.manifest()?;
        }
        Ok(dir)
    }

    /// Opens an existing data directory, rejecting unknown schema versions.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = Self { root: root.into() };
        dir.manifest()?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn manifest(&self) -> Result<Manifest, StoreError> {
        let path = self.path(MANIFEST_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotInitialized(self.root.clone()))
            }
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        // Check the version before the full shape so foreign layouts get the
        // precise error.
        let probe: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| StoreError::Malformed {
            path: path.clone(),
            line_no: 1,
            reason: e.to_string(),
        })?;
        let found = probe
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersionMismatch {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        serde_json::from_value(probe).map_err(|e| StoreError::Malformed {
            path,
            line_no: 1,
            reason: e.to_string(),
        })
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), StoreError> {
        let mut batch = AtomicBatch::new();
        self.stage_manifest(&mut batch, manifest)?;
        batch.commit()
    }

    pub fn stage_manifest(&self, batch: &mut AtomicBatch, manifest: &Manifest) -> Result<(), StoreError> {
        let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        bytes.push(b'\n');
        batch.stage_bytes(&self.path(MANIFEST_FILE), &bytes)
    }

    pub fn has_corpus(&self) -> bool {
        self.path(CHUNKS_FILE).exists()
    }

    /// Writes documents, turns and chunks in one batch.
    ///
    /// With `replace`, an existing corpus is overwritten and derived stores
    /// (enrichments and vectors) are discarded; feedback is kept.
    pub fn write_corpus(
        &self,
        documents: &[SessionDocument],
        turns: &[SpeakerTurn],
        chunks: &[Chunk],
        replace: bool,
    ) -> Result<(), StoreError> {
        if self.has_corpus() && !replace {
            return Err(StoreError::CorpusExists(self.root.clone()));
        }
        let mut manifest = self.manifest()?;
        let mut batch = AtomicBatch::new();
        batch.stage_jsonl(&self.path(DOCUMENTS_FILE), documents)?;
        batch.stage_jsonl(&self.path(TURNS_FILE), turns)?;
        batch.stage_jsonl(&self.path(CHUNKS_FILE), chunks)?;
        if replace {
            batch.stage_jsonl::<Enrichment, _>(&self.path(ENRICHMENTS_FILE), [])?;
            crate::index::stage_vectors(&mut batch, self, 0, &[], &[])?;
            manifest.embedding_model.clear();
            manifest.dim = 0;
            manifest.config_fingerprint.clear();
        }
        manifest.built_at = Utc::now();
        self.stage_manifest(&mut batch, &manifest)?;
        batch.commit()
    }

    pub fn load_corpus(&self) -> Result<Corpus, StoreError> {
        let documents = read_store(&self.path(DOCUMENTS_FILE))?;
        let turns = read_store(&self.path(TURNS_FILE))?;
        let chunks = read_store(&self.path(CHUNKS_FILE))?;
        Ok(Corpus::new(documents, turns, chunks))
    }

    pub fn enrichments(&self) -> Result<EnrichmentStore, StoreError> {
        EnrichmentStore::load(self)
    }
}

/// Enrichments keyed by `(chunk_id, prompt_version)`, in insertion order.
#[derive(Debug, Clone)]
pub struct EnrichmentStore {
    dir: DataDir,
    records: Vec<Enrichment>,
    by_key: HashMap<(String, String), usize>,
}

impl EnrichmentStore {
    pub fn load(dir: &DataDir) -> Result<Self, StoreError> {
        let mut store = Self {
            dir: dir.clone(),
            records: Vec::new(),
            by_key: HashMap::new(),
        };
        for record in read_store::<Enrichment>(&dir.path(ENRICHMENTS_FILE))? {
            store.insert(record);
        }
        Ok(store)
    }

    pub fn contains(&self, chunk_id: &str, prompt_version: &str) -> bool {
        self.by_key
            .contains_key(&(chunk_id.to_string(), prompt_version.to_string()))
    }

    pub fn get(&self, chunk_id: &str, prompt_version: &str) -> Option<&Enrichment> {
        self.by_key
            .get(&(chunk_id.to_string(), prompt_version.to_string()))
            .map(|&i| &self.records[i])
    }

    /// Inserts or replaces the record for its key.
    pub fn insert(&mut self, record: Enrichment) {
        let key = (record.chunk_id.clone(), record.prompt_version.clone());
        match self.by_key.get(&key) {
            Some(&i) => self.records[i] = record,
            None => {
                self.by_key.insert(key, self.records.len());
                self.records.push(record);
            }
        }
    }

    pub fn records(&self) -> &[Enrichment] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records for one prompt version, keyed by chunk id.
    pub fn for_version(&self, prompt_version: &str) -> HashMap<String, Enrichment> {
        self.records
            .iter()
            .filter(|r| r.prompt_version == prompt_version)
            .map(|r| (r.chunk_id.clone(), r.clone()))
            .collect()
    }

    /// Atomically rewrites the store file with the current records.
    pub fn persist(&self) -> Result<(), StoreError> {
        self.dir.manifest()?;
        write_store(&self.dir.path(ENRICHMENTS_FILE), &self.records)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn chunk(i: usize) -> Chunk {
        Chunk {
            chunk_id: format!("d:0#{i}"),
            turn_id: "d:0".into(),
            seq: i as u32,
            text: format!("tekst {i} met \"quotes\" en é"),
            char_start: i * 10,
            char_end: i * 10 + 10,
        }
    }

    #[test]
    fn hundred_chunks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHUNKS_FILE);
        let chunks: Vec<Chunk> = (0..100).map(chunk).collect();
        assert_eq!(write_store(&path, &chunks).unwrap(), 100);
        let back: Vec<Chunk> = read_store(&path).unwrap();
        assert_eq!(back, chunks);
    }

    #[test]
    fn empty_store_creates_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHUNKS_FILE);
        assert_eq!(write_store::<Chunk, _>(&path, []).unwrap(), 0);
        assert!(path.exists());
        assert!(read_store::<Chunk>(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHUNKS_FILE);
        write_store(&path, &[chunk(0)]).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{broken\n");
        fs::write(&path, text).unwrap();
        match read_store::<Chunk>(&path) {
            Err(StoreError::Malformed { line_no, .. }) => assert_eq!(line_no, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let data = DataDir::create(dir.path()).unwrap();
        let mut m = data.manifest().unwrap();
        m.schema_version = 99;
        fs::write(data.path(MANIFEST_FILE), serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(
            DataDir::open(dir.path()),
            Err(StoreError::SchemaVersionMismatch { found: 99, expected: 1 })
        ));
    }

    #[test]
    fn persisting_into_foreign_store_fails() {
        let dir = tempfile::tempdir().unwrap();
        let data = DataDir::create(dir.path()).unwrap();
        let store = data.enrichments().unwrap();
        fs::write(data.path(MANIFEST_FILE), r#"{"schema_version": 7}"#).unwrap();
        assert!(matches!(
            store.persist(),
            Err(StoreError::SchemaVersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn missing_manifest_is_not_initialized() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(DataDir::open(dir.path()), Err(StoreError::NotInitialized(_))));
    }

    #[test]
    fn corpus_is_not_silently_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let data = DataDir::create(dir.path()).unwrap();
        data.write_corpus(&[], &[], &[chunk(0)], false).unwrap();
        assert!(matches!(
            data.write_corpus(&[], &[], &[], false),
            Err(StoreError::CorpusExists(_))
        ));
        data.write_corpus(&[], &[], &[], true).unwrap();
        assert!(data.load_corpus().unwrap().chunks().is_empty());
    }

    #[test]
    fn enrichment_store_keys_by_prompt_version() {
        let dir = tempfile::tempdir().unwrap();
        let data = DataDir::create(dir.path()).unwrap();
        let mut store = data.enrichments().unwrap();
        let base = Enrichment {
            chunk_id: "c".into(),
            full_summary: "f".into(),
            short_summary: "s".into(),
            politician: "p".into(),
            party: "q".into(),
            topic: "t".into(),
            backend_model: "m".into(),
            created_at: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
            prompt_version: "v1".into(),
        };
        store.insert(base.clone());
        store.insert(Enrichment {
            prompt_version: "v2".into(),
            ..base.clone()
        });
        store.insert(Enrichment {
            topic: "t2".into(),
            ..base.clone()
        });
        assert_eq!(store.len(), 2);
        assert_eq!(store.get("c", "v1").unwrap().topic, "t2");
        store.persist().unwrap();
        let reloaded = data.enrichments().unwrap();
        assert_eq!(reloaded.records(), store.records());
        assert!(reloaded.contains("c", "v2"));
        assert!(!reloaded.contains("c", "v3"));
    }

    #[test]
    fn fingerprint_depends_on_every_part() {
        let a = config_fingerprint("m", 8, "full_summary", "v1");
        assert_eq!(a, config_fingerprint("m", 8, "full_summary", "v1"));
        assert_ne!(a, config_fingerprint("m2", 8, "full_summary", "v1"));
        assert_ne!(a, config_fingerprint("m", 9, "full_summary", "v1"));
        assert_ne!(a, config_fingerprint("m", 8, "raw_chunk", "v1"));
        assert_ne!(a, config_fingerprint("m", 8, "full_summary", "v2"));
    }
}
