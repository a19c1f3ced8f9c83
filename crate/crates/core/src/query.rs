//! The staged interaction: ranked one-line summaries for a question, then an
//! on-demand generated answer grounded in one chosen source, then the full
//! source itself.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, EmbeddingBackend, GenerationBackend, GenerationRequest};
use crate::enrich::{Enrichment, PROMPT_VERSION};
use crate::index::{self, IndexError, RetrievalText, SearchFilter, VectorIndex, DEFAULT_K};
use crate::ingest::{char_slice, Chunk, Corpus, SessionDocument, SpeakerTurn};
use crate::store::{config_fingerprint, DataDir, StoreError};

pub const DEFAULT_STAGE1_CHAR_BUDGET: usize = 4000;
pub const DEFAULT_STAGE2_CHAR_BUDGET: usize = 4000;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("k must be positive")]
    InvalidK,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("the index is empty")]
    EmptyIndex,
    #[error("unknown chunk {0:?}")]
    UnknownChunk(String),
    #[error("chunk {0:?} has no enrichment")]
    NotEnriched(String),
    #[error(transparent)]
    BackendUnavailable(BackendError),
    #[error("backend returned an empty response")]
    EmptyBackendResponse,
    #[error("query embedding: {0}")]
    Embedding(IndexError),
    #[error("index does not match the configured embedding backend: {0}")]
    IndexMismatch(String),
    #[error("stored data is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<IndexError> for QueryError {
    fn from(err: IndexError) -> Self {
        match err {
            IndexError::Backend(e) => QueryError::BackendUnavailable(e),
            IndexError::EmptyIndex => QueryError::EmptyIndex,
            IndexError::InvalidFilter(msg) => QueryError::InvalidFilter(msg),
            IndexError::Store(e) => QueryError::Store(e),
            other => QueryError::Embedding(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalSettings {
    pub k: usize,
    pub stage1_char_budget: usize,
    pub stage2_char_budget: usize,
    pub retrieval_text: RetrievalText,
    pub max_output_tokens: u32,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            stage1_char_budget: DEFAULT_STAGE1_CHAR_BUDGET,
            stage2_char_budget: DEFAULT_STAGE2_CHAR_BUDGET,
            retrieval_text: RetrievalText::FullSummary,
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneHit {
    pub chunk_id: String,
    pub rank: usize,
    pub score: f32,
    pub short_summary: String,
    pub politician: String,
    pub party: String,
    pub topic: String,
    pub session_date: NaiveDate,
    pub doc_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneResult {
    pub query: String,
    pub hits: Vec<StageOneHit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    FullSummary,
    RawChunk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTwoResponse {
    pub query: String,
    pub chunk_id: String,
    pub response_text: String,
    pub context_used: ContextSource,
    pub backend_model: String,
}

/// A chunk with its parent turn and document, for rendering the full source
/// with the chunk span highlighted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBundle {
    pub chunk: Chunk,
    pub turn: SpeakerTurn,
    pub document: SessionDocument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub chunks: usize,
    pub indexed: usize,
}

/// Picks the raw chunk when it fits the budget, else the full summary.
pub fn choose_context(chunk: &Chunk, stage2_char_budget: usize) -> ContextSource {
    if chunk.text.chars().count() <= stage2_char_budget {
        ContextSource::RawChunk
    } else {
        ContextSource::FullSummary
    }
}

pub fn build_response_prompt(
    query: &str,
    chunk: &Chunk,
    turn: &SpeakerTurn,
    document: &SessionDocument,
    enrichment: &Enrichment,
    context: ContextSource,
    max_output_tokens: u32,
) -> GenerationRequest {
    let system_instructions = format!(
        "You help citizens understand parliamentary debates.\n\
         You are given a question and one source excerpt from a parliamentary session.\n\
         Explain how this source answers the question. Use only the source; if it does not \
         address the question, say so.\n\
         Answer in the language with tag \"{lang}\".",
        lang = document.language,
    );
    let (label, material) = match context {
        ContextSource::RawChunk => ("Source transcript excerpt", chunk.text.as_str()),
        ContextSource::FullSummary => ("Source summary", enrichment.full_summary.as_str()),
    };
    let party = if enrichment.party.is_empty() {
        "unknown"
    } else {
        enrichment.party.as_str()
    };
    let user_content = format!(
        "Question: {query}\n\n\
         Speaker: {speaker}\n\
         Party: {party}\n\
         Topic: {topic}\n\
         Session: {kind} session of {date}\n\n\
         {label}:\n{material}",
        speaker = turn.speaker,
        topic = enrichment.topic,
        kind = document.session_type,
        date = document.session_date,
    );
    GenerationRequest {
        system_instructions,
        user_content,
        max_output_tokens,
        temperature: 0.0,
    }
}

/// Serves the staged interaction over an immutable snapshot of the stores.
pub struct QueryEngine {
    corpus: Arc<Corpus>,
    enrichments: HashMap<String, Enrichment>,
    index: Arc<VectorIndex>,
    embedder: Arc<dyn EmbeddingBackend>,
    generator: Arc<dyn GenerationBackend>,
    settings: RetrievalSettings,
    suggestions: Vec<String>,
}

impl QueryEngine {
    pub fn new(
        corpus: Arc<Corpus>,
        enrichments: HashMap<String, Enrichment>,
        index: Arc<VectorIndex>,
        embedder: Arc<dyn EmbeddingBackend>,
        generator: Arc<dyn GenerationBackend>,
        settings: RetrievalSettings,
        suggestions: Vec<String>,
    ) -> Self {
        Self {
            corpus,
            enrichments,
            index,
            embedder,
            generator,
            settings,
            suggestions,
        }
    }

    /// Loads the corpus, the enrichments of the manifest's prompt version and
    /// the vector index from `dir`.
    ///
    /// Fails with [`QueryError::IndexMismatch`] when the index was built with
    /// a different embedding model or retrieval text than configured here.
    pub fn open(
        dir: &DataDir,
        embedder: Arc<dyn EmbeddingBackend>,
        generator: Arc<dyn GenerationBackend>,
        settings: RetrievalSettings,
        suggestions: Vec<String>,
    ) -> Result<Self, QueryError> {
        let manifest = dir.manifest()?;
        let prompt_version = if manifest.prompt_version.is_empty() {
            PROMPT_VERSION.to_string()
        } else {
            manifest.prompt_version.clone()
        };
        let corpus = dir.load_corpus()?;
        let enrichments = dir.enrichments()?.for_version(&prompt_version);
        let index = VectorIndex::load(dir, &corpus, &enrichments)?;
        if !index.is_empty() {
            let expected = config_fingerprint(
                embedder.model(),
                index.dim(),
                settings.retrieval_text.as_str(),
                &prompt_version,
            );
            if expected != manifest.config_fingerprint {
                return Err(QueryError::IndexMismatch(format!(
                    "index built with model {:?}, configured model is {:?} (retrieval text {})",
                    manifest.embedding_model,
                    embedder.model(),
                    settings.retrieval_text.as_str()
                )));
            }
        }
        Ok(Self::new(
            Arc::new(corpus),
            enrichments,
            Arc::new(index),
            embedder,
            generator,
            settings,
            suggestions,
        ))
    }

    pub fn settings(&self) -> &RetrievalSettings {
        &self.settings
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn embedding_model(&self) -> &str {
        if self.index.model().is_empty() {
            self.embedder.model()
        } else {
            self.index.model()
        }
    }

    pub fn generation_model(&self) -> &str {
        self.generator.model()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            documents: self.corpus.documents().len(),
            chunks: self.corpus.chunks().len(),
            indexed: self.index.len(),
        }
    }

    pub fn enrichment(&self, chunk_id: &str) -> Option<&Enrichment> {
        self.enrichments.get(chunk_id)
    }

    /// Stage one: embed the question, search, and attach one-line summaries.
    ///
    /// The hit list is cut so the one-line summaries together stay within
    /// the stage-one character budget; summaries themselves are never cut.
    pub async fn ask(&self, query: &str, k: Option<usize>, filter: &SearchFilter) -> Result<StageOneResult, QueryError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        let k = k.unwrap_or(self.settings.k);
        if k == 0 {
            return Err(QueryError::InvalidK);
        }
        filter.validate()?;
        if self.index.is_empty() {
            return Err(QueryError::EmptyIndex);
        }
        let vector = index::embed_text(query, self.embedder.as_ref(), Some(self.index.dim())).await?;
        let hits = self.index.search(&vector, k, filter)?;

        let mut used = 0;
        let mut out = Vec::with_capacity(hits.len());
        for hit in hits {
            let Some(enrichment) = self.enrichments.get(&hit.chunk_id) else {
                continue;
            };
            let Some((_, turn, doc)) = self.corpus.lineage(&hit.chunk_id) else {
                continue;
            };
            let cost = enrichment.short_summary.chars().count();
            if used + cost > self.settings.stage1_char_budget {
                break;
            }
            used += cost;
            out.push(StageOneHit {
                rank: out.len() + 1,
                chunk_id: hit.chunk_id,
                score: hit.score,
                short_summary: enrichment.short_summary.clone(),
                politician: enrichment.politician.clone(),
                party: enrichment.party.clone(),
                topic: enrichment.topic.clone(),
                session_date: doc.session_date,
                doc_id: turn.doc_id.clone(),
            });
        }
        Ok(StageOneResult {
            query: query.to_string(),
            hits: out,
        })
    }

    /// Stage two: a generated answer grounded in exactly one chunk.
    pub async fn respond(&self, query: &str, chunk_id: &str) -> Result<StageTwoResponse, QueryError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        let (chunk, turn, doc) = self
            .corpus
            .lineage(chunk_id)
            .ok_or_else(|| QueryError::UnknownChunk(chunk_id.to_string()))?;
        let enrichment = self
            .enrichments
            .get(chunk_id)
            .ok_or_else(|| QueryError::NotEnriched(chunk_id.to_string()))?;
        let context = choose_context(chunk, self.settings.stage2_char_budget);
        let request = build_response_prompt(
            query,
            chunk,
            turn,
            doc,
            enrichment,
            context,
            self.settings.max_output_tokens,
        );
        let reply = self
            .generator
            .generate(&request)
            .await
            .map_err(QueryError::BackendUnavailable)?;
        if reply.trim().is_empty() {
            return Err(QueryError::EmptyBackendResponse);
        }
        Ok(StageTwoResponse {
            query: query.to_string(),
            chunk_id: chunk_id.to_string(),
            response_text: reply,
            context_used: context,
            backend_model: self.generator.model().to_string(),
        })
    }

    pub fn get_source(&self, chunk_id: &str) -> Result<SourceBundle, QueryError> {
        let (chunk, turn, doc) = self
            .corpus
            .lineage(chunk_id)
            .ok_or_else(|| QueryError::UnknownChunk(chunk_id.to_string()))?;
        if char_slice(&turn.text, chunk.char_start, chunk.char_end) != Some(chunk.text.as_str()) {
            return Err(QueryError::Inconsistent(format!(
                "chunk {chunk_id} does not match its span in turn {}",
                turn.turn_id
            )));
        }
        Ok(SourceBundle {
            chunk: chunk.clone(),
            turn: turn.clone(),
            document: doc.clone(),
        })
    }

    pub fn suggestions(&self) -> &[String] {
        &self.suggestions
    }
}
