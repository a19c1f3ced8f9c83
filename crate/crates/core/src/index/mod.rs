//! Dense retrieval: query/document embedding, the on-disk vector index and
//! exact top-k cosine search with metadata filters.
//!
//! All stored and query vectors are unit length, so the dot product is the
//! cosine similarity. Search is a full scan; results are totally ordered by
//! score descending, then chunk id ascending.

mod build;
pub mod file;

use std::cmp::Ordering;
use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, EmbeddingBackend};
use crate::enrich::Enrichment;
use crate::ingest::{Corpus, SessionType};
use crate::store::{DataDir, StoreError};

pub use build::{index_corpus, IndexOptions, IndexReport};
pub use file::stage_vectors;

pub const DEFAULT_K: usize = 10;
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;
const ZERO_NORM: f64 = 1e-12;
/// Looser bound for query vectors, which may come from outside callers.
const QUERY_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("embedding has zero norm")]
    ZeroVector,
    #[error("embedding dimension {found} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("query vector is not unit length (norm {0})")]
    NotNormalized(f64),
    #[error("the index is empty")]
    EmptyIndex,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Which text of an enriched chunk is embedded for retrieval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalText {
    #[default]
    FullSummary,
    RawChunk,
}

impl RetrievalText {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalText::FullSummary => "full_summary",
            RetrievalText::RawChunk => "raw_chunk",
        }
    }
}

/// A stored, unit-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub chunk_id: String,
    pub vector: Vec<f32>,
    pub model: String,
    pub dim: usize,
}

/// Divides by the L2 norm (computed in f64).
pub fn normalize(raw: &[f32]) -> Result<Vec<f32>, IndexError> {
    let norm = raw.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if !(norm >= ZERO_NORM) || !norm.is_finite() {
        return Err(IndexError::ZeroVector);
    }
    Ok(raw.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Embeds one text and returns its unit-length vector.
pub async fn embed_text(
    text: &str,
    backend: &dyn EmbeddingBackend,
    expected_dim: Option<usize>,
) -> Result<Vec<f32>, IndexError> {
    let mut out = backend.embed(&[text.to_string()]).await?;
    if out.len() != 1 {
        return Err(BackendError::Protocol(format!("expected 1 embedding, got {}", out.len())).into());
    }
    let raw = out.pop().expect("one embedding");
    if let Some(expected) = expected_dim {
        if raw.len() != expected {
            return Err(IndexError::DimensionMismatch {
                expected,
                found: raw.len(),
            });
        }
    }
    normalize(&raw)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub politician: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_type: Option<SessionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_from: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_to: Option<NaiveDate>,
}

impl SearchFilter {
    pub fn validate(&self) -> Result<(), IndexError> {
        if let (Some(from), Some(to)) = (self.date_from, self.date_to) {
            if from > to {
                return Err(IndexError::InvalidFilter(format!(
                    "date_from {from} is after date_to {to}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        *self == SearchFilter::default()
    }

    /// Exact, case-sensitive match on every present field; date bounds are
    /// inclusive.
    pub fn matches(&self, meta: &RowMeta) -> bool {
        fn eq(want: &Option<String>, have: &str) -> bool {
            want.as_deref().is_none_or(|w| w == have)
        }
        eq(&self.politician, &meta.politician)
            && eq(&self.party, &meta.party)
            && eq(&self.topic, &meta.topic)
            && self.session_type.is_none_or(|t| meta.session_type == Some(t))
            && self
                .date_from
                .is_none_or(|from| meta.session_date.is_some_and(|d| d >= from))
            && self
                .date_to
                .is_none_or(|to| meta.session_date.is_some_and(|d| d <= to))
    }
}

/// Filterable metadata of one indexed chunk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RowMeta {
    pub politician: String,
    pub party: String,
    pub topic: String,
    pub session_type: Option<SessionType>,
    pub session_date: Option<NaiveDate>,
}

impl RowMeta {
    pub fn join(chunk_id: &str, corpus: &Corpus, enrichment: Option<&Enrichment>) -> Self {
        let doc = corpus.lineage(chunk_id).map(|(_, _, d)| d);
        Self {
            politician: enrichment.map(|e| e.politician.clone()).unwrap_or_default(),
            party: enrichment.map(|e| e.party.clone()).unwrap_or_default(),
            topic: enrichment.map(|e| e.topic.clone()).unwrap_or_default(),
            session_type: doc.map(|d| d.session_type),
            session_date: doc.map(|d| d.session_date),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f32,
    pub rank: usize,
}

/// Score descending, then chunk id ascending.
pub fn hit_order(a_score: f32, a_id: &str, b_score: f32, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.cmp(b_id))
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    const LANES: usize = 8;
    let mut acc = [0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += f64::from(x[i]) * f64::from(y[i]);
        }
    }
    let mut tail = 0f64;
    for (x, y) in ra.iter().zip(rb) {
        tail += f64::from(*x) * f64::from(*y);
    }
    (acc.iter().sum::<f64>() + tail) as f32
}

/// An immutable in-memory snapshot of the vector index.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    model: String,
    ids: Vec<String>,
    data: Vec<f32>,
    meta: Vec<RowMeta>,
}

impl VectorIndex {
    /// Builds an index from row-major unit vectors.
    pub fn from_parts(
        dim: usize,
        model: impl Into<String>,
        ids: Vec<String>,
        data: Vec<f32>,
        meta: Vec<RowMeta>,
    ) -> Result<Self, IndexError> {
        if data.len() != ids.len() * dim || meta.len() != ids.len() {
            return Err(IndexError::DimensionMismatch {
                expected: ids.len() * dim,
                found: data.len(),
            });
        }
        Ok(Self {
            dim,
            model: model.into(),
            ids,
            data,
            meta,
        })
    }

    /// Loads the index from disk and joins filter metadata. Returns an empty
    /// index when none has been built.
    pub fn load(
        dir: &DataDir,
        corpus: &Corpus,
        enrichments: &HashMap<String, Enrichment>,
    ) -> Result<Self, IndexError> {
        let manifest = dir.manifest()?;
        let Some(stored) = file::read_stored(dir)? else {
            return Ok(Self::default());
        };
        let meta = stored
            .ids
            .iter()
            .map(|id| RowMeta::join(id, corpus, enrichments.get(id)))
            .collect();
        Self::from_parts(stored.dim, manifest.embedding_model, stored.ids, stored.data, meta)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn meta(&self, row: usize) -> &RowMeta {
        &self.meta[row]
    }

    pub fn records(&self) -> impl Iterator<Item = EmbeddingRecord> + '_ {
        (0..self.len()).map(|row| EmbeddingRecord {
            chunk_id: self.ids[row].clone(),
            vector: self.vector(row).to_vec(),
            model: self.model.clone(),
            dim: self.dim,
        })
    }

    /// Exact top-k search over the rows admitted by `filter`.
    pub fn search(&self, query: &[f32], k: usize, filter: &SearchFilter) -> Result<Vec<SearchHit>, IndexError> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let norm = l2_norm(query);
        if (norm - 1.0).abs() > QUERY_NORM_TOLERANCE {
            return Err(IndexError::NotNormalized(norm));
        }
        filter.validate()?;
        if k == 0 {
            return Ok(Vec::new());
        }

        let unfiltered = filter.is_empty();
        let mut scored: Vec<(f32, usize)> = self
            .data
            .chunks_exact(self.dim)
            .enumerate()
            .filter(|(row, _)| unfiltered || filter.matches(&self.meta[*row]))
            .map(|(row, v)| (dot(query, v), row))
            .collect();

        let cmp = |a: &(f32, usize), b: &(f32, usize)| hit_order(a.0, &self.ids[a.1], b.0, &self.ids[b.1]);
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);

        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, row))| SearchHit {
                chunk_id: self.ids[row].clone(),
                score,
                rank: i + 1,
            })
            .collect())
    }
}
