use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;

use super::{turn_id, SessionDocument, SessionType, SpeakerTurn};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("duplicate turn: document {doc_id:?} has sequence {sequence} twice")]
    DuplicateTurn { doc_id: String, sequence: u64 },
    #[error("corpus contains no speaker turns")]
    EmptyCorpus,
    #[error("failed to read corpus: {0}")]
    Io(#[from] std::io::Error),
}

/// Documents and their turns, as read from a corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCorpus {
    pub documents: Vec<SessionDocument>,
    pub turns: Vec<SpeakerTurn>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnLine {
    doc_id: String,
    session_date: String,
    session_type: String,
    language: String,
    source_url: String,
    sequence: u64,
    speaker: String,
    party: String,
    text: String,
}

/// Collapses every run of whitespace into a single space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

pub fn parse_corpus(path: &Path) -> Result<ParsedCorpus, IngestError> {
    let bytes = std::fs::read(path)?;
    parse_corpus_bytes(&bytes)
}

/// Parses canonical JSONL corpus bytes.
///
/// Fails on the first malformed line. Blank lines are ignored. Documents are
/// returned in order of first appearance; turns are grouped per document and
/// ordered by `sequence`.
pub fn parse_corpus_bytes(bytes: &[u8]) -> Result<ParsedCorpus, IngestError> {
    let mut doc_order: Vec<String> = Vec::new();
    let mut docs: HashMap<String, SessionDocument> = HashMap::new();
    let mut turns: HashMap<String, BTreeMap<u64, SpeakerTurn>> = HashMap::new();

    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let malformed = |reason: String| IngestError::MalformedLine { line_no, reason };

        let line = std::str::from_utf8(raw).map_err(|_| malformed("invalid UTF-8".into()))?;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TurnLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;

        let doc_id = parsed.doc_id.trim().to_string();
        if doc_id.is_empty() {
            return Err(malformed("empty doc_id".into()));
        }
        let session_date = NaiveDate::parse_from_str(&parsed.session_date, "%Y-%m-%d")
            .map_err(|e| malformed(format!("invalid session_date: {e}")))?;
        let session_type: SessionType = parsed.session_type.parse().map_err(malformed)?;
        let speaker = normalize_whitespace(&parsed.speaker);
        if speaker.is_empty() {
            return Err(malformed("empty speaker".into()));
        }
        let text = normalize_whitespace(&parsed.text);
        if text.is_empty() {
            return Err(malformed("empty text".into()));
        }

        let document = SessionDocument {
            doc_id: doc_id.clone(),
            session_date,
            session_type,
            language: parsed.language.trim().to_string(),
            source_url: parsed.source_url.trim().to_string(),
            turn_count: 0,
        };
        match docs.get(&doc_id) {
            Some(existing) if *existing != document => {
                return Err(malformed(format!(
                    "metadata for document {doc_id:?} conflicts with an earlier line"
                )));
            }
            Some(_) => {}
            None => {
                doc_order.push(doc_id.clone());
                docs.insert(doc_id.clone(), document);
            }
        }

        let by_seq = turns.entry(doc_id.clone()).or_default();
        if by_seq.contains_key(&parsed.sequence) {
            return Err(IngestError::DuplicateTurn {
                doc_id,
                sequence: parsed.sequence,
            });
        }
        by_seq.insert(
            parsed.sequence,
            SpeakerTurn {
                turn_id: turn_id(&doc_id, parsed.sequence),
                doc_id,
                sequence: parsed.sequence,
                speaker,
                party: normalize_whitespace(&parsed.party),
                text,
            },
        );
    }

    if doc_order.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }

    let mut documents = Vec::with_capacity(doc_order.len());
    let mut ordered_turns = Vec::new();
    for doc_id in doc_order {
        let mut doc = docs.remove(&doc_id).expect("document recorded with its id");
        let doc_turns = turns.remove(&doc_id).unwrap_or_default();
        doc.turn_count = doc_turns.len();
        ordered_turns.extend(doc_turns.into_values());
        documents.push(doc);
    }

    Ok(ParsedCorpus {
        documents,
        turns: ordered_turns,
    })
}
