//! TOML configuration.
//!
//! ```toml
//! suggestions = ["Who supports more nuclear power plants?"]
//!
//! [backends.embedding]
//! kind = "openai"
//! base_url = "http://localhost:8080/v1"
//! model = "bge-m3"
//!
//! [backends.generation]
//! kind = "openai"
//! base_url = "http://localhost:8081/v1"
//! model = "my-chat-model"
//! api_key_env = "GENERATION_API_KEY"
//!
//! [chunking]
//! max_chunk_chars = 2000
//!
//! [retrieval]
//! k = 10
//! stage1_char_budget = 4000
//! stage2_char_budget = 4000
//!
//! [server]
//! port = 8000
//! ```
//!
//! Without a file every backend is a deterministic offline double: a
//! 256-dimensional hashing embedder and the extractive summarizer.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::mock::{EchoBackend, ExtractiveBackend};
use crate::backend::{
    BackendDescriptor, BackendError, EmbeddingBackend, GenerationBackend, HashEmbedder, OpenAiChat, OpenAiEmbeddings,
    RetryPolicy, WithTimeout,
};
use crate::enrich::{EnrichOptions, PROMPT_VERSION};
use crate::index::{RetrievalText, DEFAULT_K};
use crate::ingest::{DEFAULT_MAX_CHUNK_CHARS, MIN_MAX_CHUNK_CHARS};
use crate::query::{RetrievalSettings, DEFAULT_STAGE1_CHAR_BUDGET, DEFAULT_STAGE2_CHAR_BUDGET};

pub const DEFAULT_EMBEDDING_BACKEND: &str = "embedding";
pub const DEFAULT_GENERATION_BACKEND: &str = "generation";
const DEFAULT_HASH_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("no backend section named {0:?}")]
    UnknownBackend(String),
    #[error("backend {name:?}: {source}")]
    Backend { name: String, source: BackendError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP endpoint.
    Openai,
    /// Feature-hashing embedder (embedding only).
    Hash,
    /// Extractive summarizer double (generation only).
    Extractive,
    /// Echoes the prompt (generation only).
    Echo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Vector length for `hash` backends.
    #[serde(default)]
    pub dim: Option<usize>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

impl BackendConfig {
    pub fn of_kind(kind: BackendKind) -> Self {
        Self {
            kind,
            base_url: String::new(),
            model: String::new(),
            api_key_env: String::new(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            dim: None,
        }
    }

    pub fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms.max(1))
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.descriptor().retry_policy()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub max_chunk_chars: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_chunk_chars: DEFAULT_MAX_CHUNK_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub stage1_char_budget: usize,
    pub stage2_char_budget: usize,
    pub retrieval_text: RetrievalText,
    pub embedding_backend: String,
    pub generation_backend: String,
    pub max_output_tokens: u32,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            stage1_char_budget: DEFAULT_STAGE1_CHAR_BUDGET,
            stage2_char_budget: DEFAULT_STAGE2_CHAR_BUDGET,
            retrieval_text: RetrievalText::default(),
            embedding_backend: DEFAULT_EMBEDDING_BACKEND.into(),
            generation_backend: DEFAULT_GENERATION_BACKEND.into(),
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichmentConfig {
    pub backend: String,
    pub concurrency: usize,
    pub prompt_version: String,
    pub max_output_tokens: u32,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        Self {
            backend: DEFAULT_GENERATION_BACKEND.into(),
            concurrency: 4,
            prompt_version: PROMPT_VERSION.into(),
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Allowed browser origin; `*` allows any.
    pub cors_origin: String,
    /// Requests per minute and client IP on generation endpoints; 0 disables.
    pub rate_limit_per_min: u32,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8000,
            cors_origin: "http://localhost:5173".into(),
            rate_limit_per_min: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backends: BTreeMap<String, BackendConfig>,
    pub chunking: ChunkingConfig,
    pub retrieval: RetrievalConfig,
    pub enrichment: EnrichmentConfig,
    pub suggestions: Vec<String>,
    pub server: ServerConfig,
}

impl Default for Config {
    fn default() -> Self {
        let mut backends = BTreeMap::new();
        backends.insert(
            DEFAULT_EMBEDDING_BACKEND.to_string(),
            BackendConfig {
                dim: Some(DEFAULT_HASH_DIM),
                ..BackendConfig::of_kind(BackendKind::Hash)
            },
        );
        backends.insert(
            DEFAULT_GENERATION_BACKEND.to_string(),
            BackendConfig::of_kind(BackendKind::Extractive),
        );
        Self {
            backends,
            chunking: ChunkingConfig::default(),
            retrieval: RetrievalConfig::default(),
            enrichment: EnrichmentConfig::default(),
            suggestions: Vec::new(),
            server: ServerConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let parsed: Config = toml::from_str(text)?;
        let mut config = Config::default();
        // Named backends from the file extend (and may override) the
        // offline defaults.
        config.backends.extend(parsed.backends);
        config.chunking = parsed.chunking;
        config.retrieval = parsed.retrieval;
        config.enrichment = parsed.enrichment;
        config.suggestions = parsed.suggestions;
        config.server = parsed.server;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chunking.max_chunk_chars < MIN_MAX_CHUNK_CHARS {
            return Err(ConfigError::Invalid(format!(
                "chunking.max_chunk_chars must be at least {MIN_MAX_CHUNK_CHARS}"
            )));
        }
        if self.retrieval.k == 0 {
            return Err(ConfigError::Invalid("retrieval.k must be positive".into()));
        }
        if self.enrichment.concurrency == 0 {
            return Err(ConfigError::Invalid("enrichment.concurrency must be positive".into()));
        }
        for (name, backend) in &self.backends {
            if backend.kind == BackendKind::Openai {
                backend
                    .descriptor()
                    .validate()
                    .map_err(|source| ConfigError::Backend {
                        name: name.clone(),
                        source,
                    })?;
            }
            if backend.kind == BackendKind::Hash && backend.dim == Some(0) {
                return Err(ConfigError::Invalid(format!("backend {name:?}: dim must be positive")));
            }
        }
        Ok(())
    }

    pub fn backend(&self, name: &str) -> Result<&BackendConfig, ConfigError> {
        self.backends
            .get(name)
            .ok_or_else(|| ConfigError::UnknownBackend(name.to_string()))
    }

    /// Instantiates the named generation backend, wrapped in its timeout.
    pub fn generation_backend(&self, name: &str) -> Result<Arc<dyn GenerationBackend>, ConfigError> {
        let cfg = self.backend(name)?;
        let timeout = cfg.timeout();
        let backend: Arc<dyn GenerationBackend> = match cfg.kind {
            BackendKind::Openai => Arc::new(WithTimeout::new(
                OpenAiChat::new(&cfg.descriptor()).map_err(|source| ConfigError::Backend {
                    name: name.to_string(),
                    source,
                })?,
                timeout,
            )),
            BackendKind::Extractive => Arc::new(ExtractiveBackend::new()),
            BackendKind::Echo => Arc::new(EchoBackend::new()),
            BackendKind::Hash => {
                return Err(ConfigError::Invalid(format!(
                    "backend {name:?} is an embedding backend"
                )))
            }
        };
        Ok(backend)
    }

    /// Instantiates the named embedding backend. `dim_override` replaces the
    /// configured dimension of hashing backends.
    pub fn embedding_backend(&self, name: &str, dim_override: Option<usize>) -> Result<Arc<dyn EmbeddingBackend>, ConfigError> {
        let cfg = self.backend(name)?;
        let backend: Arc<dyn EmbeddingBackend> = match cfg.kind {
            BackendKind::Openai => Arc::new(WithTimeout::new(
                OpenAiEmbeddings::new(&cfg.descriptor()).map_err(|source| ConfigError::Backend {
                    name: name.to_string(),
                    source,
                })?,
                cfg.timeout(),
            )),
            BackendKind::Hash => {
                let dim = dim_override.or(cfg.dim).unwrap_or(DEFAULT_HASH_DIM);
                if dim == 0 {
                    return Err(ConfigError::Invalid("embedding dimension must be positive".into()));
                }
                Arc::new(HashEmbedder::new(dim))
            }
            BackendKind::Extractive | BackendKind::Echo => {
                return Err(ConfigError::Invalid(format!(
                    "backend {name:?} is a generation backend"
                )))
            }
        };
        Ok(backend)
    }

    pub fn retrieval_settings(&self) -> RetrievalSettings {
        RetrievalSettings {
            k: self.retrieval.k,
            stage1_char_budget: self.retrieval.stage1_char_budget,
            stage2_char_budget: self.retrieval.stage2_char_budget,
            retrieval_text: self.retrieval.retrieval_text,
            max_output_tokens: self.retrieval.max_output_tokens,
        }
    }

    pub fn enrich_options(&self, backend: &str) -> Result<EnrichOptions, ConfigError> {
        Ok(EnrichOptions {
            prompt_version: self.enrichment.prompt_version.clone(),
            max_chunk_chars: self.chunking.max_chunk_chars,
            max_output_tokens: self.enrichment.max_output_tokens,
            retry: self.backend(backend)?.retry_policy(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_work_offline() {
        let c = Config::default();
        assert!(c.validate().is_ok());
        let e = c.embedding_backend("embedding", None).unwrap();
        assert_eq!(e.model(), "fnv1a-hash-256");
        assert_eq!(c.embedding_backend("embedding", Some(64)).unwrap().model(), "fnv1a-hash-64");
        assert_eq!(c.generation_backend("generation").unwrap().model(), "extractive-mock");
    }

    #[test]
    fn full_file_parses() {
        let c = Config::from_toml(
            r#"
            suggestions = ["Wie is voor kernenergie?", "Wat kost de pensioenhervorming?", "Wie is voor kernenergie?"]

            [backends.embedding]
            kind = "openai"
            base_url = "http://localhost:8080/v1"
            model = "bge-m3"

            [backends.chat]
            kind = "openai"
            base_url = "http://localhost:8081/v1"
            model = "chat"
            api_key_env = "CHAT_KEY"
            timeout_ms = 5000
            max_retries = 2

            [chunking]
            max_chunk_chars = 1500

            [retrieval]
            k = 7
            stage1_char_budget = 1400
            generation_backend = "chat"

            [server]
            port = 9000
            cors_origin = "*"
            rate_limit_per_min = 5
            "#,
        )
        .unwrap();
        assert_eq!(c.suggestions.len(), 3);
        assert_eq!(c.suggestions[2], "Wie is voor kernenergie?");
        assert_eq!(c.backend("chat").unwrap().max_retries, 2);
        assert_eq!(c.retrieval.k, 7);
        assert_eq!(c.retrieval.stage2_char_budget, DEFAULT_STAGE2_CHAR_BUDGET);
        assert_eq!(c.chunking.max_chunk_chars, 1500);
        assert_eq!(c.server.port, 9000);
        assert!(c.backends.contains_key("generation"));
        assert_eq!(c.enrich_options("chat").unwrap().retry.max_attempts, 2);
    }

    #[test]
    fn empty_file_is_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert!(c.suggestions.is_empty());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml("[chunking]\nmax_chunk_chars = 10").is_err());
        assert!(Config::from_toml("[retrieval]\nk = 0").is_err());
        assert!(Config::from_toml("[backends.x]\nkind = \"openai\"\nbase_url = \"nope\"").is_err());
        assert!(Config::from_toml("[retrieval]\nbogus = 1").is_err());
        assert!(matches!(
            Config::default().generation_backend("missing"),
            Err(ConfigError::UnknownBackend(_))
        ));
        assert!(Config::default().generation_backend("embedding").is_err());
    }
}
