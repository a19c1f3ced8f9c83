//! Clients for OpenAI-compatible `/chat/completions` and `/embeddings`.

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{BackendDescriptor, BackendError, EmbeddingBackend, GenerationBackend, GenerationRequest};

#[derive(Debug, Clone)]
struct HttpEndpoint {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
    timeout: std::time::Duration,
}

impl HttpEndpoint {
    fn new(descriptor: &BackendDescriptor, path: &str) -> Result<Self, BackendError> {
        descriptor.validate()?;
        let client = reqwest::Client::builder()
            .timeout(descriptor.timeout())
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let api_key = if descriptor.api_key_env.is_empty() {
            None
        } else {
            std::env::var(&descriptor.api_key_env).ok()
        };
        Ok(Self {
            client,
            url: format!("{}/{path}", descriptor.base_url.trim_end_matches('/')),
            api_key,
            timeout: descriptor.timeout(),
        })
    }

    async fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R, BackendError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(self.timeout)
            } else {
                BackendError::Unavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            debug!(url = %self.url, %status, "backend returned error status");
            return Err(BackendError::Unavailable(format!(
                "{} returned {status}: {}",
                self.url,
                body.chars().take(200).collect::<String>()
            )));
        }
        resp.json::<R>()
            .await
            .map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f32,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Chat-completion client. The reply is the first choice's message content.
#[derive(Debug, Clone)]
pub struct OpenAiChat {
    endpoint: HttpEndpoint,
    model: String,
}

impl OpenAiChat {
    pub fn new(descriptor: &BackendDescriptor) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: HttpEndpoint::new(descriptor, "chat/completions")?,
            model: descriptor.model.clone(),
        })
    }
}

#[async_trait]
impl GenerationBackend for OpenAiChat {
    fn model(&self) -> &str {
        &self.model
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let mut messages = Vec::with_capacity(2);
        if !request.system_instructions.is_empty() {
            messages.push(ChatMessage {
                role: "system",
                content: &request.system_instructions,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: &request.user_content,
        });
        let body = ChatBody {
            model: &self.model,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let resp: ChatResponse = self.endpoint.post(&body).await?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Protocol("response has no message content".into()))
    }
}

#[derive(Debug, Serialize)]
struct EmbeddingBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct OpenAiEmbeddings {
    endpoint: HttpEndpoint,
    model: String,
}

impl OpenAiEmbeddings {
    pub fn new(descriptor: &BackendDescriptor) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: HttpEndpoint::new(descriptor, "embeddings")?,
            model: descriptor.model.clone(),
        })
    }
}

#[async_trait]
impl EmbeddingBackend for OpenAiEmbeddings {
    fn model(&self) -> &str {
        &self.model
    }

    async fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let body = EmbeddingBody {
            model: &self.model,
            input: inputs,
        };
        let resp: EmbeddingResponse = self.endpoint.post(&body).await?;
        if resp.data.len() != inputs.len() {
            return Err(BackendError::Protocol(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                resp.data.len()
            )));
        }
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; inputs.len()];
        for (pos, item) in resp.data.into_iter().enumerate() {
            let at = item.index.unwrap_or(pos);
            match slots.get_mut(at) {
                Some(slot @ None) => *slot = Some(item.embedding),
                _ => {
                    return Err(BackendError::Protocol(format!(
                        "embedding index {at} is out of range or repeated"
                    )))
                }
            }
        }
        Ok(slots.into_iter().map(|s| s.expect("every slot filled")).collect())
    }
}
