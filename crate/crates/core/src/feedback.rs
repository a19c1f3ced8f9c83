//! Explicit binary feedback on retrieval results and generated responses,
//! kept in an append-only `feedback.jsonl`.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::store::{read_store, StoreError, FEEDBACK_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Retrieval,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub event_id: String,
    pub query: String,
    pub chunk_id: String,
    pub stage: Stage,
    pub rating: Rating,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("unknown chunk {0:?}")]
    UnknownChunk(String),
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Store(#[from] StoreError),
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Serialized appender for feedback events.
///
/// Each event is written as one line and synced to disk before
/// [`record`](Self::record) returns.
pub struct FeedbackLog {
    path: PathBuf,
    file: Mutex<File>,
    known_chunks: Arc<HashSet<String>>,
    clock: Clock,
}

impl FeedbackLog {
    /// Opens (creating if needed) the log in `data_dir`. Events may only
    /// reference chunks in `known_chunks`.
    pub fn open(data_dir: &Path, known_chunks: Arc<HashSet<String>>) -> Result<Self, FeedbackError> {
        let path = data_dir.join(FEEDBACK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        Ok(Self {
            path,
            file: Mutex::new(file),
            known_chunks,
            clock: Box::new(Utc::now),
        })
    }

    /// Replaces the timestamp source.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, query: &str, chunk_id: &str, stage: Stage, rating: Rating) -> Result<FeedbackEvent, FeedbackError> {
        if query.trim().is_empty() {
            return Err(FeedbackError::EmptyQuery);
        }
        if !self.known_chunks.contains(chunk_id) {
            return Err(FeedbackError::UnknownChunk(chunk_id.to_string()));
        }
        let mut line = Vec::new();
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        let event = FeedbackEvent {
            event_id: Uuid::new_v4().to_string(),
            query: query.to_string(),
            chunk_id: chunk_id.to_string(),
            stage,
            rating,
            created_at: (self.clock)(),
        };
        serde_json::to_writer(&mut line, &event).expect("event serializes");
        line.push(b'\n');
        let io_err = |e: io::Error| StoreError::io(&self.path, e);
        file.write_all(&line).map_err(io_err)?;
        file.flush().map_err(io_err)?;
        file.sync_data().map_err(io_err)?;
        Ok(event)
    }
}

/// Events with `created_at >= since` (all when `since` is `None`), in append
/// order.
pub fn export(data_dir: &Path, since: Option<DateTime<Utc>>) -> Result<Vec<FeedbackEvent>, StoreError> {
    let events: Vec<FeedbackEvent> = read_store(&data_dir.join(FEEDBACK_FILE))?;
    Ok(events
        .into_iter()
        .filter(|e| since.is_none_or(|s| e.created_at >= s))
        .collect())
}
