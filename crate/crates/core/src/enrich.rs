//! Per-chunk enrichment: one structured generation call returns the
//! comprehensive summary, the one-line summary and the politician, party and
//! topic tags for a chunk.

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::backend::{BackendError, GenerationBackend, GenerationRequest, RetryPolicy};
use crate::ingest::{Chunk, Corpus, SessionDocument, SpeakerTurn, DEFAULT_MAX_CHUNK_CHARS};
use crate::store::{EnrichmentStore, StoreError};

pub const PROMPT_VERSION: &str = "enrich-v1";
pub const SHORT_SUMMARY_MAX_CHARS: usize = 200;

/// Separates the metadata header of an enrichment prompt from the source text.
pub const SOURCE_TEXT_MARKER: &str = "\nText:\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrichment {
    pub chunk_id: String,
    pub full_summary: String,
    pub short_summary: String,
    pub politician: String,
    pub party: String,
    pub topic: String,
    pub backend_model: String,
    pub created_at: DateTime<Utc>,
    pub prompt_version: String,
}

impl Enrichment {
    /// Checks the summary bounds. Returns a human-readable reason on failure.
    pub fn validate(&self, max_chunk_chars: usize) -> Result<(), String> {
        validate_summaries(&self.full_summary, &self.short_summary, max_chunk_chars)
    }
}

fn validate_summaries(full: &str, short: &str, max_chunk_chars: usize) -> Result<(), String> {
    if full.trim().is_empty() {
        return Err("full_summary is empty".into());
    }
    if full.chars().count() > max_chunk_chars {
        return Err(format!("full_summary exceeds {max_chunk_chars} characters"));
    }
    if short.trim().is_empty() {
        return Err("short_summary is empty".into());
    }
    if short.contains(['\n', '\r']) {
        return Err("short_summary spans more than one line".into());
    }
    if short.chars().count() > SHORT_SUMMARY_MAX_CHARS {
        return Err(format!("short_summary exceeds {SHORT_SUMMARY_MAX_CHARS} characters"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichOptions {
    pub prompt_version: String,
    pub max_chunk_chars: usize,
    pub max_output_tokens: u32,
    pub retry: RetryPolicy,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        Self {
            prompt_version: PROMPT_VERSION.into(),
            max_chunk_chars: DEFAULT_MAX_CHUNK_CHARS,
            max_output_tokens: 1024,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EnrichError {
    #[error("backend unavailable after {attempts} attempts: {source}")]
    BackendUnavailable { attempts: u32, source: BackendError },
    #[error("no valid enrichment after {attempts} attempts: {reason}")]
    SchemaViolation { attempts: u32, reason: String },
    #[error("chunk {0} has no parent turn or document")]
    MissingParent(String),
}

pub fn build_enrichment_prompt(
    chunk: &Chunk,
    turn: &SpeakerTurn,
    document: &SessionDocument,
    options: &EnrichOptions,
) -> GenerationRequest {
    let system_instructions = format!(
        "You summarize excerpts of parliamentary debates.\n\
         Reply with one JSON object and nothing else. It must contain exactly these string keys:\n\
         - \"full_summary\": a comprehensive summary of the excerpt, at most {max} characters;\n\
         - \"short_summary\": a one-line summary of at most {short} characters, without line breaks;\n\
         - \"politician\": the name of the speaker;\n\
         - \"party\": the speaker's political party;\n\
         - \"topic\": a single short label for the main topic.\n\
         Write both summaries in the language of the excerpt.\n\
         Prompt version: {version}",
        max = options.max_chunk_chars,
        short = SHORT_SUMMARY_MAX_CHARS,
        version = options.prompt_version,
    );
    let party = if turn.party.is_empty() {
        "unknown"
    } else {
        turn.party.as_str()
    };
    let user_content = format!(
        "Speaker: {speaker}\n\
         Party: {party}\n\
         Session: {kind} session of {date}\n\
         Document: {doc}\n\
         Language: {lang}{marker}{text}",
        speaker = turn.speaker,
        kind = document.session_type,
        date = document.session_date,
        doc = document.doc_id,
        lang = document.language,
        marker = SOURCE_TEXT_MARKER,
        text = chunk.text,
    );
    GenerationRequest {
        system_instructions,
        user_content,
        max_output_tokens: options.max_output_tokens,
        temperature: 0.0,
    }
}

#[derive(Debug, Deserialize)]
struct RawEnrichment {
    full_summary: Option<String>,
    short_summary: Option<String>,
    #[serde(default)]
    politician: Option<String>,
    #[serde(default)]
    party: Option<String>,
    #[serde(default)]
    topic: Option<String>,
}

/// Extracts the JSON object from a model reply, tolerating code fences and
/// surrounding prose.
fn json_object(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (start < end).then(|| &reply[start..=end])
}

fn parse_reply(
    reply: &str,
    chunk: &Chunk,
    turn: &SpeakerTurn,
    model: &str,
    options: &EnrichOptions,
) -> Result<Enrichment, String> {
    let body = json_object(reply).ok_or_else(|| "reply contains no JSON object".to_string())?;
    let raw: RawEnrichment =
        serde_json::from_str(body).map_err(|e| format!("reply is not valid enrichment JSON: {e}"))?;
    let full = raw.full_summary.unwrap_or_default().trim().to_string();
    let short = raw.short_summary.unwrap_or_default().trim().to_string();
    validate_summaries(&full, &short, options.max_chunk_chars)?;

    let pick = |source: &str, generated: Option<String>| {
        if source.is_empty() {
            generated.unwrap_or_default().trim().to_string()
        } else {
            source.to_string()
        }
    };
    Ok(Enrichment {
        chunk_id: chunk.chunk_id.clone(),
        full_summary: full,
        short_summary: short,
        politician: pick(&turn.speaker, raw.politician),
        party: pick(&turn.party, raw.party),
        topic: raw.topic.unwrap_or_default().trim().to_string(),
        backend_model: model.to_string(),
        created_at: Utc::now(),
        prompt_version: options.prompt_version.clone(),
    })
}

enum AttemptError {
    Backend(BackendError),
    Schema(String),
}

/// Enriches one chunk, retrying backend failures and invalid replies.
pub async fn enrich_chunk(
    chunk: &Chunk,
    turn: &SpeakerTurn,
    document: &SessionDocument,
    backend: &dyn GenerationBackend,
    options: &EnrichOptions,
) -> Result<Enrichment, EnrichError> {
    let request = build_enrichment_prompt(chunk, turn, document, options);
    let outcome = options
        .retry
        .run(|attempt| {
            let request = &request;
            async move {
                let reply = backend.generate(request).await.map_err(AttemptError::Backend)?;
                parse_reply(&reply, chunk, turn, backend.model(), options).map_err(|reason| {
                    warn!(chunk = %chunk.chunk_id, attempt, %reason, "rejected enrichment reply");
                    AttemptError::Schema(reason)
                })
            }
        })
        .await;
    outcome.map_err(|(err, attempts)| match err {
        AttemptError::Backend(source) => EnrichError::BackendUnavailable { attempts, source },
        AttemptError::Schema(reason) => EnrichError::SchemaViolation { attempts, reason },
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EnrichReport {
    pub enriched: usize,
    pub cached: usize,
    pub failed: Vec<String>,
}

/// Store writes are batched; each batch is one atomic rewrite.
const PERSIST_EVERY: usize = 256;

/// Enriches every chunk that has no enrichment for the current prompt
/// version yet, with at most `concurrency_limit` backend requests in flight.
///
/// Per-chunk failures are reported, not raised. `failed` keeps input order.
pub async fn enrich_corpus(
    corpus: &Corpus,
    chunks: &[Chunk],
    store: &mut EnrichmentStore,
    backend: &dyn GenerationBackend,
    concurrency_limit: usize,
    options: &EnrichOptions,
) -> Result<EnrichReport, StoreError> {
    let mut report = EnrichReport::default();
    let mut pending = Vec::new();
    for (pos, chunk) in chunks.iter().enumerate() {
        if store.contains(&chunk.chunk_id, &options.prompt_version) {
            report.cached += 1;
        } else {
            pending.push((pos, chunk));
        }
    }

    let mut results = stream::iter(pending)
        .map(|(pos, chunk)| async move {
            let outcome = match corpus.turn(&chunk.turn_id).and_then(|t| {
                corpus.document(&t.doc_id).map(|d| (t, d))
            }) {
                Some((turn, doc)) => enrich_chunk(chunk, turn, doc, backend, options).await,
                None => Err(EnrichError::MissingParent(chunk.chunk_id.clone())),
            };
            (pos, chunk, outcome)
        })
        .buffer_unordered(concurrency_limit.max(1));

    let mut failed = Vec::new();
    let mut unsaved = 0;
    while let Some((pos, chunk, outcome)) = results.next().await {
        match outcome {
            Ok(enrichment) => {
                store.insert(enrichment);
                report.enriched += 1;
                unsaved += 1;
                if unsaved >= PERSIST_EVERY {
                    store.persist()?;
                    unsaved = 0;
                }
            }
            Err(err) => {
                warn!(chunk = %chunk.chunk_id, error = %err, "enrichment failed");
                failed.push((pos, chunk.chunk_id.clone()));
            }
        }
    }
    if unsaved > 0 {
        store.persist()?;
    }
    failed.sort_unstable();
    report.failed = failed.into_iter().map(|(_, id)| id).collect();
    info!(
        enriched = report.enriched,
        cached = report.cached,
        failed = report.failed.len(),
        "enrichment finished"
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::ScriptedBackend;
    use chrono::NaiveDate;

    fn fixture() -> (Chunk, SpeakerTurn, SessionDocument) {
        let doc = SessionDocument {
            doc_id: "plen-042".into(),
            session_date: NaiveDate::from_ymd_opt(2024, 3, 14).unwrap(),
            session_type: crate::ingest::SessionType::Plenary,
            language: "nl".into(),
            source_url: String::new(),
            turn_count: 1,
        };
        let turn = SpeakerTurn {
            turn_id: "plen-042:0".into(),
            doc_id: doc.doc_id.clone(),
            sequence: 0,
            speaker: "An Janssens".into(),
            party: "Groen".into(),
            text: "We moeten \"nu\" investeren in windenergie.".into(),
        };
        let chunk = Chunk {
            chunk_id: "plen-042:0#0".into(),
            turn_id: turn.turn_id.clone(),
            seq: 0,
            text: turn.text.clone(),
            char_start: 0,
            char_end: turn.text.chars().count(),
        };
        (chunk, turn, doc)
    }

    fn options(attempts: u32) -> EnrichOptions {
        EnrichOptions {
            retry: RetryPolicy::no_backoff(attempts),
            ..EnrichOptions::default()
        }
    }

    const VALID: &str = r#"{"full_summary":"Pleit voor investeringen in windenergie.","short_summary":"Meer windenergie.","politician":"Someone Else","party":"Other","topic":"energie"}"#;

    #[test]
    fn prompt_is_deterministic_and_verbatim() {
        let (chunk, turn, doc) = fixture();
        let opts = EnrichOptions::default();
        let a = build_enrichment_prompt(&chunk, &turn, &doc, &opts);
        let b = build_enrichment_prompt(&chunk, &turn, &doc, &opts);
        assert_eq!(a, b);
        assert!(a.user_content.contains("\"nu\""));
        assert!(a.user_content.ends_with(&chunk.text));
        assert!(a.user_content.contains("An Janssens"));
        assert!(a.user_content.contains("2024-03-14"));
        assert_eq!(a.temperature, 0.0);
    }

    #[test]
    fn prompt_version_changes_instructions() {
        let (chunk, turn, doc) = fixture();
        let v1 = build_enrichment_prompt(&chunk, &turn, &doc, &EnrichOptions::default());
        let v2 = build_enrichment_prompt(
            &chunk,
            &turn,
            &doc,
            &EnrichOptions {
                prompt_version: "enrich-v2".into(),
                ..EnrichOptions::default()
            },
        );
        assert_ne!(v1.system_instructions, v2.system_instructions);
        assert_eq!(v1.user_content, v2.user_content);
    }

    #[tokio::test]
    async fn identity_fields_come_from_source_metadata() {
        let (chunk, turn, doc) = fixture();
        let mock = ScriptedBackend::fixed(VALID);
        let e = enrich_chunk(&chunk, &turn, &doc, &mock, &options(3)).await.unwrap();
        assert_eq!(e.full_summary, "Pleit voor investeringen in windenergie.");
        assert_eq!(e.short_summary, "Meer windenergie.");
        assert_eq!(e.topic, "energie");
        assert_eq!(e.politician, "An Janssens");
        assert_eq!(e.party, "Groen");
        assert_eq!(e.prompt_version, PROMPT_VERSION);
        assert_eq!(e.backend_model, "scripted-mock");
        assert_eq!(mock.calls(), 1);
    }

    #[tokio::test]
    async fn model_party_used_when_metadata_is_empty() {
        let (chunk, mut turn, doc) = fixture();
        turn.party.clear();
        let mock = ScriptedBackend::fixed(VALID);
        let e = enrich_chunk(&chunk, &turn, &doc, &mock, &options(1)).await.unwrap();
        assert_eq!(e.party, "Other");
    }

    #[tokio::test]
    async fn succeeds_on_third_attempt() {
        let (chunk, turn, doc) = fixture();
        let mock = ScriptedBackend::texts(["Sure! Here it is.", "still not json", VALID]);
        let e = enrich_chunk(&chunk, &turn, &doc, &mock, &options(3)).await;
        assert!(e.is_ok());
        assert_eq!(mock.calls(), 3);
    }

    #[tokio::test]
    async fn empty_full_summary_is_schema_violation() {
        let (chunk, turn, doc) = fixture();
        let mock = ScriptedBackend::fixed(r#"{"full_summary": ""}"#);
        let err = enrich_chunk(&chunk, &turn, &doc, &mock, &options(3)).await.unwrap_err();
        assert!(matches!(err, EnrichError::SchemaViolation { attempts: 3, .. }));
        assert_eq!(mock.calls(), 3);
    }

    #[tokio::test]
    async fn backend_errors_exhaust_into_unavailable() {
        let (chunk, turn, doc) = fixture();
        let mock = ScriptedBackend::new([Err(BackendError::Unavailable("down".into()))]);
        let err = enrich_chunk(&chunk, &turn, &doc, &mock, &options(2)).await.unwrap_err();
        assert!(matches!(err, EnrichError::BackendUnavailable { attempts: 2, .. }));
    }

    #[tokio::test]
    async fn fenced_json_is_accepted() {
        let (chunk, turn, doc) = fixture();
        let mock = ScriptedBackend::fixed(format!("```json\n{VALID}\n```"));
        assert!(enrich_chunk(&chunk, &turn, &doc, &mock, &options(1)).await.is_ok());
    }

    #[tokio::test]
    async fn multi_line_short_summary_is_rejected() {
        let (chunk, turn, doc) = fixture();
        let reply = r#"{"full_summary":"a","short_summary":"line one\nline two","topic":"t"}"#;
        let mock = ScriptedBackend::fixed(reply);
        let err = enrich_chunk(&chunk, &turn, &doc, &mock, &options(1)).await.unwrap_err();
        assert!(matches!(err, EnrichError::SchemaViolation { attempts: 1, .. }));
    }

    #[test]
    fn summary_bounds() {
        assert!(validate_summaries("x", &"y".repeat(200), 10).is_ok());
        assert!(validate_summaries("x", &"y".repeat(201), 10).is_err());
        assert!(validate_summaries(&"x".repeat(11), "y", 10).is_err());
        assert!(validate_summaries(" ", "y", 10).is_err());
        assert!(validate_summaries("x", "", 10).is_err());
    }
}
