//! Deterministic in-process backends for tests and offline pipelines.
//!
//! Every double counts the calls it serves so tests can assert exact backend
//! traffic.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;

use super::{BackendError, EmbeddingBackend, GenerationBackend, GenerationRequest};
use crate::enrich::SOURCE_TEXT_MARKER;
use crate::ingest::segment_sentences;

/// Replays a fixed sequence of responses; the final entry repeats forever.
#[derive(Debug)]
pub struct ScriptedBackend {
    model: String,
    script: Mutex<VecDeque<Result<String, BackendError>>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new<I>(script: I) -> Self
    where
        I: IntoIterator<Item = Result<String, BackendError>>,
    {
        let script: VecDeque<_> = script.into_iter().collect();
        assert!(!script.is_empty(), "ScriptedBackend needs at least one response");
        Self {
            model: "scripted-mock".into(),
            script: Mutex::new(script),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self::texts([text])
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl GenerationBackend for ScriptedBackend {
    fn model(&self) -> &str {
        &self.model
    }

    async fn generate(&self, _request: &GenerationRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut script = self.script.lock().unwrap();
        if script.len() > 1 {
            script.pop_front().expect("non-empty script")
        } else {
            script.front().cloned().expect("non-empty script")
        }
    }
}

/// Answers every request with its own user content.
#[derive(Debug, Default)]
pub struct EchoBackend {
    calls: AtomicUsize,
}

impl EchoBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl GenerationBackend for EchoBackend {
    fn model(&self) -> &str {
        "echo-mock"
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(request.user_content.clone())
    }
}

/// Offline stand-in for a summarizing model.
///
/// For enrichment prompts it answers with a valid enrichment object built
/// from the source text: the text itself as the full summary, its first
/// sentence (cut to 200 characters) as the one-line summary and its longest
/// word as the topic. Any other request is echoed back.
#[derive(Debug, Default)]
pub struct ExtractiveBackend {
    calls: AtomicUsize,
}

impl ExtractiveBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn enrichment_json(source: &str) -> String {
        let source = source.trim();
        let first = segment_sentences(source)
            .first()
            .map(|&(s, e)| source.chars().skip(s).take(e - s).collect::<String>())
            .unwrap_or_default();
        let short: String = first.chars().take(200).collect();
        let topic = source
            .split(|c: char| !c.is_alphabetic())
            .filter(|w| w.chars().count() >= 4)
            .fold("", |best, w| {
                if w.chars().count() > best.chars().count() {
                    w
                } else {
                    best
                }
            })
            .to_lowercase();
        serde_json::json!({
            "full_summary": source,
            "short_summary": short.trim(),
            "topic": if topic.is_empty() { "general".to_string() } else { topic },
        })
        .to_string()
    }
}

#[async_trait]
impl GenerationBackend for ExtractiveBackend {
    fn model(&self) -> &str {
        "extractive-mock"
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match request.user_content.split_once(SOURCE_TEXT_MARKER) {
            Some((_, source)) => Ok(Self::enrichment_json(source)),
            None => Ok(request.user_content.clone()),
        }
    }
}

/// Generation backend driven by a closure.
pub struct FnBackend<F> {
    model: String,
    respond: F,
    calls: AtomicUsize,
}

impl<F> FnBackend<F>
where
    F: Fn(&GenerationRequest) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(model: impl Into<String>, respond: F) -> Self {
        Self {
            model: model.into(),
            respond,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl<F> GenerationBackend for FnBackend<F>
where
    F: Fn(&GenerationRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn model(&self) -> &str {
        &self.model
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.respond)(request)
    }
}

/// Embedding backend driven by a closure over a single input.
pub struct FnEmbedder<F> {
    model: String,
    embed: F,
    calls: AtomicUsize,
}

impl<F> FnEmbedder<F>
where
    F: Fn(&str) -> Result<Vec<f32>, BackendError> + Send + Sync,
{
    pub fn new(model: impl Into<String>, embed: F) -> Self {
        Self {
            model: model.into(),
            embed,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl<F> EmbeddingBackend for FnEmbedder<F>
where
    F: Fn(&str) -> Result<Vec<f32>, BackendError> + Send + Sync,
{
    fn model(&self) -> &str {
        &self.model
    }

    async fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        inputs.iter().map(|t| (self.embed)(t)).collect()
    }
}

/// Never answers. Pair with [`super::WithTimeout`] to simulate a hung backend.
#[derive(Debug)]
pub struct Stalled {
    model: String,
}

impl Stalled {
    pub fn new(model: impl Into<String>) -> Self {
        Self { model: model.into() }
    }
}

#[async_trait]
impl GenerationBackend for Stalled {
    fn model(&self) -> &str {
        &self.model
    }

    async fn generate(&self, _request: &GenerationRequest) -> Result<String, BackendError> {
        std::future::pending().await
    }
}

#[async_trait]
impl EmbeddingBackend for Stalled {
    fn model(&self) -> &str {
        &self.model
    }

    async fn embed(&self, _inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        std::future::pending().await
    }
}
