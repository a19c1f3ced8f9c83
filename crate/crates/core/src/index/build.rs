use std::collections::HashMap;

use chrono::Utc;
use serde::Serialize;
use tracing::info;

use super::file::{read_stored, stage_vectors};
use super::{normalize, IndexError, RetrievalText};
use crate::backend::{BackendError, EmbeddingBackend, RetryPolicy};
use crate::enrich::PROMPT_VERSION;
use crate::ingest::Corpus;
use crate::store::{config_fingerprint, AtomicBatch, DataDir, EnrichmentStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexOptions {
    pub retrieval_text: RetrievalText,
    pub prompt_version: String,
    /// Reject backends whose vectors have a different length.
    pub expected_dim: Option<usize>,
    pub batch_size: usize,
    pub retry: RetryPolicy,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            retrieval_text: RetrievalText::default(),
            prompt_version: PROMPT_VERSION.into(),
            expected_dim: None,
            batch_size: 64,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IndexReport {
    pub indexed: usize,
    pub skipped: usize,
}

/// Embeds the retrieval text of every enriched chunk and rewrites the vector
/// file, its sidecar and the manifest in one atomic batch.
///
/// Rows from a previous build with the same model and settings are reused
/// (`skipped`); chunks without an enrichment for the current prompt version
/// are left out and counted nowhere. Nothing on disk changes if any
/// embedding call fails.
pub async fn index_corpus(
    dir: &DataDir,
    corpus: &Corpus,
    enrichments: &EnrichmentStore,
    backend: &dyn EmbeddingBackend,
    options: &IndexOptions,
) -> Result<IndexReport, IndexError> {
    let mut manifest = dir.manifest()?;
    let model = backend.model().to_string();

    let mut previous: HashMap<String, usize> = HashMap::new();
    let mut previous_data = Vec::new();
    let mut dim = options.expected_dim;
    if !manifest.config_fingerprint.is_empty() {
        let same_settings = manifest.config_fingerprint
            == config_fingerprint(
                &model,
                manifest.dim as usize,
                options.retrieval_text.as_str(),
                &options.prompt_version,
            );
        if same_settings && options.expected_dim.is_none_or(|d| d == manifest.dim as usize) {
            if let Some(stored) = read_stored(dir)? {
                if stored.dim > 0 {
                    dim = Some(stored.dim);
                    previous = stored.ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
                    previous_data = stored.data;
                }
            }
        }
    }

    enum Row {
        Reused(usize),
        Fresh(usize),
    }
    let mut rows: Vec<(String, Row)> = Vec::new();
    let mut texts: Vec<String> = Vec::new();
    for chunk in corpus.chunks() {
        let Some(enrichment) = enrichments.get(&chunk.chunk_id, &options.prompt_version) else {
            continue;
        };
        match previous.get(&chunk.chunk_id) {
            Some(&row) => rows.push((chunk.chunk_id.clone(), Row::Reused(row))),
            None => {
                let text = match options.retrieval_text {
                    RetrievalText::FullSummary => enrichment.full_summary.clone(),
                    RetrievalText::RawChunk => chunk.text.clone(),
                };
                rows.push((chunk.chunk_id.clone(), Row::Fresh(texts.len())));
                texts.push(text);
            }
        }
    }

    let mut fresh: Vec<Vec<f32>> = Vec::with_capacity(texts.len());
    for batch in texts.chunks(options.batch_size.max(1)) {
        let raw = options
            .retry
            .run(|_| backend.embed(batch))
            .await
            .map_err(|(e, _)| e)?;
        if raw.len() != batch.len() {
            return Err(BackendError::Protocol(format!(
                "expected {} embeddings, got {}",
                batch.len(),
                raw.len()
            ))
            .into());
        }
        for vector in raw {
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(IndexError::DimensionMismatch {
                    expected,
                    found: vector.len(),
                });
            }
            fresh.push(normalize(&vector)?);
        }
    }

    let dim = dim.unwrap_or(0);
    let mut ids = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * dim);
    let mut report = IndexReport::default();
    for (chunk_id, row) in rows {
        match row {
            Row::Reused(r) => {
                data.extend_from_slice(&previous_data[r * dim..(r + 1) * dim]);
                report.skipped += 1;
            }
            Row::Fresh(i) => {
                data.extend_from_slice(&fresh[i]);
                report.indexed += 1;
            }
        }
        ids.push(chunk_id);
    }

    manifest.embedding_model = model;
    manifest.dim = dim as u32;
    manifest.prompt_version = options.prompt_version.clone();
    manifest.config_fingerprint = config_fingerprint(
        &manifest.embedding_model,
        dim,
        options.retrieval_text.as_str(),
        &options.prompt_version,
    );
    manifest.built_at = Utc::now();

    let mut batch = AtomicBatch::new();
    stage_vectors(&mut batch, dir, dim, &ids, &data)?;
    dir.stage_manifest(&mut batch, &manifest)?;
    batch.commit()?;

    info!(indexed = report.indexed, skipped = report.skipped, dim, "index written");
    Ok(report)
}
