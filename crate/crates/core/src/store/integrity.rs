use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    read_store, DataDir, CHUNKS_FILE, DOCUMENTS_FILE, EMBEDDINGS_FILE, EMBEDDINGS_IDS_FILE, ENRICHMENTS_FILE,
    FEEDBACK_FILE, TURNS_FILE,
};
use crate::enrich::Enrichment;
use crate::feedback::FeedbackEvent;
use crate::index::file::{parse_header, IdLine};
use crate::ingest::{char_slice, Chunk, SessionDocument, SpeakerTurn};

/// A record whose parent record is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orphan {
    pub store: String,
    pub id: String,
    pub missing_parent: String,
}

/// A reference to a chunk that does not exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dangling {
    pub store: String,
    pub chunk_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub orphans: Vec<Orphan>,
    pub dangling: Vec<Dangling>,
    /// Structural problems: unreadable stores, bad vector header, counts or
    /// spans that disagree.
    pub problems: Vec<String>,
    pub ok: bool,
}

fn load<T: DeserializeOwned>(root: &Path, file: &str, problems: &mut Vec<String>) -> Vec<T> {
    match read_store(&root.join(file)) {
        Ok(records) => records,
        Err(e) => {
            problems.push(e.to_string());
            Vec::new()
        }
    }
}

/// Verifies referential integrity across all stores and the vector file
/// header. Problems are reported, never raised.
pub fn integrity_check(root: &Path) -> IntegrityReport {
    let mut report = IntegrityReport::default();
    let problems = &mut report.problems;

    if let Err(e) = DataDir::open(root) {
        problems.push(e.to_string());
    }

    let documents: Vec<SessionDocument> = load(root, DOCUMENTS_FILE, problems);
    let turns: Vec<SpeakerTurn> = load(root, TURNS_FILE, problems);
    let chunks: Vec<Chunk> = load(root, CHUNKS_FILE, problems);
    let enrichments: Vec<Enrichment> = load(root, ENRICHMENTS_FILE, problems);
    let feedback: Vec<FeedbackEvent> = load(root, FEEDBACK_FILE, problems);

    let doc_ids: HashSet<&str> = documents.iter().map(|d| d.doc_id.as_str()).collect();
    let turn_by_id: HashMap<&str, &SpeakerTurn> = turns.iter().map(|t| (t.turn_id.as_str(), t)).collect();
    let chunk_ids: HashSet<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();

    if doc_ids.len() != documents.len() {
        problems.push("duplicate doc_id in documents.jsonl".into());
    }
    if chunk_ids.len() != chunks.len() {
        problems.push("duplicate chunk_id in chunks.jsonl".into());
    }

    let mut turns_per_doc: HashMap<&str, usize> = HashMap::new();
    for turn in &turns {
        *turns_per_doc.entry(turn.doc_id.as_str()).or_default() += 1;
        if !doc_ids.contains(turn.doc_id.as_str()) {
            report.orphans.push(Orphan {
                store: TURNS_FILE.into(),
                id: turn.turn_id.clone(),
                missing_parent: turn.doc_id.clone(),
            });
        }
    }
    for doc in &documents {
        let stored = turns_per_doc.get(doc.doc_id.as_str()).copied().unwrap_or(0);
        if stored != doc.turn_count {
            problems.push(format!(
                "document {} declares {} turns but {} are stored",
                doc.doc_id, doc.turn_count, stored
            ));
        }
    }
    for chunk in &chunks {
        match turn_by_id.get(chunk.turn_id.as_str()) {
            None => report.orphans.push(Orphan {
                store: CHUNKS_FILE.into(),
                id: chunk.chunk_id.clone(),
                missing_parent: chunk.turn_id.clone(),
            }),
            Some(turn) => {
                if char_slice(&turn.text, chunk.char_start, chunk.char_end) != Some(chunk.text.as_str()) {
                    problems.push(format!("chunk {} does not match its span in the turn", chunk.chunk_id));
                }
            }
        }
    }

    let mut dangling = |store: &str, ids: &mut dyn Iterator<Item = &str>| {
        let mut seen = HashSet::new();
        for id in ids {
            if !chunk_ids.contains(id) && seen.insert(id.to_string()) {
                report.dangling.push(Dangling {
                    store: store.into(),
                    chunk_id: id.to_string(),
                });
            }
        }
    };
    dangling(ENRICHMENTS_FILE, &mut enrichments.iter().map(|e| e.chunk_id.as_str()));
    dangling(FEEDBACK_FILE, &mut feedback.iter().map(|e| e.chunk_id.as_str()));

    let bin_path = root.join(EMBEDDINGS_FILE);
    let ids: Vec<IdLine> = load(root, EMBEDDINGS_IDS_FILE, &mut report.problems);
    dangling_ids(&mut report.dangling, &chunk_ids, &ids);
    match std::fs::read(&bin_path) {
        Ok(bytes) => match parse_header(&bytes) {
            Ok(header) => {
                if header.count as usize != ids.len() {
                    report.problems.push(format!(
                        "{EMBEDDINGS_FILE} has {} rows but {EMBEDDINGS_IDS_FILE} has {} ids",
                        header.count,
                        ids.len()
                    ));
                }
            }
            Err(reason) => report.problems.push(format!("{EMBEDDINGS_FILE}: {reason}")),
        },
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            if !ids.is_empty() {
                report
                    .problems
                    .push(format!("{EMBEDDINGS_IDS_FILE} exists without {EMBEDDINGS_FILE}"));
            }
        }
        Err(e) => report.problems.push(format!("{EMBEDDINGS_FILE}: {e}")),
    }

    report.ok = report.orphans.is_empty() && report.dangling.is_empty() && report.problems.is_empty();
    report
}

fn dangling_ids(out: &mut Vec<Dangling>, chunk_ids: &HashSet<&str>, ids: &[IdLine]) {
    let mut seen = HashSet::new();
    for line in ids {
        if !chunk_ids.contains(line.chunk_id.as_str()) && seen.insert(line.chunk_id.as_str()) {
            out.push(Dangling {
                store: EMBEDDINGS_IDS_FILE.into(),
                chunk_id: line.chunk_id.clone(),
            });
        }
    }
}
