//! Transcript ingestion: canonical corpus parsing, sentence segmentation and
//! chunking of speaker turns.
//!
//! A corpus is a JSON Lines file with one object per speaker turn. Turns are
//! grouped into [`SessionDocument`]s, whitespace-normalized, and then cut into
//! contiguous, non-overlapping [`Chunk`]s that never exceed the configured
//! character budget. All character offsets in this module count Unicode scalar
//! values, not bytes.

mod chunk;
mod corpus;
mod segment;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use chunk::{chunk_turn, chunk_turns, DEFAULT_MAX_CHUNK_CHARS, MIN_MAX_CHUNK_CHARS};
pub use corpus::{normalize_whitespace, parse_corpus, parse_corpus_bytes, IngestError, ParsedCorpus};
pub use segment::segment_sentences;

/// Kind of parliamentary meeting a transcript belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionType {
    Plenary,
    Committee,
}

impl SessionType {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionType::Plenary => "plenary",
            SessionType::Committee => "committee",
        }
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plenary" => Ok(SessionType::Plenary),
            "committee" => Ok(SessionType::Committee),
            other => Err(format!("unknown session type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDocument {
    pub doc_id: String,
    pub session_date: NaiveDate,
    pub session_type: SessionType,
    pub language: String,
    pub source_url: String,
    pub turn_count: usize,
}

/// One politician's contiguous statement within a session document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerTurn {
    pub turn_id: String,
    pub doc_id: String,
    pub sequence: u64,
    pub speaker: String,
    pub party: String,
    pub text: String,
}

/// A bounded slice of a turn's normalized text.
///
/// `char_start..char_end` is a half-open interval of character offsets into
/// the parent turn's text, and `text` is exactly that slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub turn_id: String,
    pub seq: u32,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Chunk {
    pub fn char_len(&self) -> usize {
        self.char_end - self.char_start
    }
}

pub fn turn_id(doc_id: &str, sequence: u64) -> String {
    format!("{doc_id}:{sequence}")
}

pub fn chunk_id(turn_id: &str, seq: u32) -> String {
    format!("{turn_id}#{seq}")
}

/// Returns the characters `start..end` of `text`, or `None` when the range is
/// out of bounds or empty-inverted.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}

/// The fully ingested corpus with lookup tables by identifier.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<SessionDocument>,
    turns: Vec<SpeakerTurn>,
    chunks: Vec<Chunk>,
    doc_index: HashMap<String, usize>,
    turn_index: HashMap<String, usize>,
    chunk_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<SessionDocument>, turns: Vec<SpeakerTurn>, chunks: Vec<Chunk>) -> Self {
        let doc_index = documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        let turn_index = turns
            .iter()
            .enumerate()
            .map(|(i, t)| (t.turn_id.clone(), i))
            .collect();
        let chunk_index = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chunk_id.clone(), i))
            .collect();
        Self {
            documents,
            turns,
            chunks,
            doc_index,
            turn_index,
            chunk_index,
        }
    }

    pub fn documents(&self) -> &[SessionDocument] {
        &self.documents
    }

    pub fn turns(&self) -> &[SpeakerTurn] {
        &self.turns
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document(&self, doc_id: &str) -> Option<&SessionDocument> {
        self.doc_index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn turn(&self, turn_id: &str) -> Option<&SpeakerTurn> {
        self.turn_index.get(turn_id).map(|&i| &self.turns[i])
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunk_index.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn contains_chunk(&self, chunk_id: &str) -> bool {
        self.chunk_index.contains_key(chunk_id)
    }

    /// Resolves a chunk together with its parent turn and document.
    pub fn lineage(&self, chunk_id: &str) -> Option<(&Chunk, &SpeakerTurn, &SessionDocument)> {
        let chunk = self.chunk(chunk_id)?;
        let turn = self.turn(&chunk.turn_id)?;
        let doc = self.document(&turn.doc_id)?;
        Some((chunk, turn, doc))
    }
}
