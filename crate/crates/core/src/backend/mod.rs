//! Generation and embedding backends.
//!
//! Production backends speak the OpenAI-compatible HTTP protocol
//! ([`openai`]). Tests and offline runs use the deterministic doubles in
//! [`mock`] and the feature-hashing embedder in [`hash`].

pub mod hash;
pub mod mock;
pub mod openai;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hash::HashEmbedder;
pub use openai::{OpenAiChat, OpenAiEmbeddings};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("unexpected backend response: {0}")]
    Protocol(String),
}

/// A single-turn request to a chat-completion style backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_instructions: String,
    pub user_content: String,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

#[async_trait]
pub trait GenerationBackend: Send + Sync {
    /// Model identifier recorded alongside generated artifacts.
    fn model(&self) -> &str;

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    fn model(&self) -> &str;

    /// Returns one raw (not necessarily normalized) vector per input.
    async fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

#[async_trait]
impl<T: GenerationBackend + ?Sized> GenerationBackend for Arc<T> {
    fn model(&self) -> &str {
        (**self).model()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request).await
    }
}

#[async_trait]
impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for Arc<T> {
    fn model(&self) -> &str {
        (**self).model()
    }

    async fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        (**self).embed(inputs).await
    }
}

/// Connection settings for an HTTP backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<url::Url, BackendError> {
        let url = url::Url::parse(&self.base_url)
            .map_err(|e| BackendError::Unavailable(format!("invalid base_url {:?}: {e}", self.base_url)))?;
        if url.cannot_be_a_base() {
            return Err(BackendError::Unavailable(format!(
                "base_url {:?} cannot be used as a base",
                self.base_url
            )));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::Unavailable("timeout_ms must be positive".into()));
        }
        Ok(url)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_retries,
            ..RetryPolicy::default()
        }
    }
}

/// Bounded retries with exponential backoff.
///
/// `max_attempts` counts every call including the first; zero behaves like one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            initial_backoff: Duration::ZERO,
        }
    }

    pub fn attempts(&self) -> u32 {
        self.max_attempts.max(1)
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .saturating_mul(2u32.saturating_pow(attempt.saturating_sub(1)))
    }

    /// Runs `op` until it succeeds or the attempt budget is spent, returning
    /// the last error together with the number of attempts made.
    pub async fn run<T, E, F, Fut>(&self, mut op: F) -> Result<T, (E, u32)>
    where
        F: FnMut(u32) -> Fut,
        Fut: Future<Output = Result<T, E>>,
    {
        let attempts = self.attempts();
        let mut attempt = 1;
        loop {
            match op(attempt).await {
                Ok(value) => return Ok(value),
                Err(err) if attempt >= attempts => return Err((err, attempt)),
                Err(_) => {
                    let wait = self.backoff(attempt);
                    if !wait.is_zero() {
                        tokio::time::sleep(wait).await;
                    }
                    attempt += 1;
                }
            }
        }
    }
}

/// Bounds every call of the wrapped backend by a deadline.
#[derive(Debug, Clone)]
pub struct WithTimeout<B> {
    inner: B,
    timeout: Duration,
}

impl<B> WithTimeout<B> {
    pub fn new(inner: B, timeout: Duration) -> Self {
        Self { inner, timeout }
    }
}

#[async_trait]
impl<B: GenerationBackend> GenerationBackend for WithTimeout<B> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        tokio::time::timeout(self.timeout, self.inner.generate(request))
            .await
            .map_err(|_| BackendError::Timeout(self.timeout))?
    }
}

#[async_trait]
impl<B: EmbeddingBackend> EmbeddingBackend for WithTimeout<B> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    async fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        tokio::time::timeout(self.timeout, self.inner.embed(inputs))
            .await
            .map_err(|_| BackendError::Timeout(self.timeout))?
    }
}
