//! OpenAI-compatible HTTP chat/embedding client (hosted APIs, ollama, vLLM).

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    ChatRequest, Completion, LlmError, LlmProvider, ProviderConfig, ProviderKind, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

pub struct HttpProvider {
    name: String,
    endpoint: String,
    model: String,
    embedding_model: String,
    credentials_ref: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

enum Failure {
    Transient(String),
    Fatal(LlmError),
}

impl HttpProvider {
    pub fn from_config(config: &ProviderConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| LlmError::Config("endpoint required".into()))?;
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(180))
            .build();
        Ok(HttpProvider {
            name: match config.kind {
                ProviderKind::LocalServer => format!("local:{}", config.model),
                _ => format!("remote:{}", config.model),
            },
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: config.model.clone(),
            embedding_model: config
                .embedding_model
                .clone()
                .unwrap_or_else(|| config.model.clone()),
            credentials_ref: config.credentials_ref.clone(),
            retry: RetryPolicy::default(),
            agent,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<serde_json::Value, LlmError> {
        let url = format!("{}/{}", self.endpoint, path);
        let mut attempts = 0;
        let mut backoff = self.retry.initial_backoff;
        loop {
            attempts += 1;
            match self.post_once(&url, &body) {
                Ok(value) => return Ok(value),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(reason)) => {
                    if attempts > self.retry.max_retries {
                        return Err(LlmError::ProviderUnavailable {
                            provider: self.name.clone(),
                            attempts,
                            reason,
                        });
                    }
                    tracing::warn!(provider = %self.name, attempts, %reason, "retrying LLM request");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }

    fn post_once(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, Failure> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(var) = &self.credentials_ref {
            match std::env::var(var) {
                Ok(key) => req = req.set("Authorization", &format!("Bearer {key}")),
                Err(_) => {
                    return Err(Failure::Fatal(LlmError::Config(format!(
                        "environment variable {var} is not set"
                    ))))
                }
            }
        }
        match req.send_json(body.clone()) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| Failure::Fatal(LlmError::InvalidResponse(e.to_string()))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let reason = format!("HTTP {code}: {}", text.chars().take(300).collect::<String>());
                if code == 429 || code >= 500 {
                    Err(Failure::Transient(reason))
                } else {
                    Err(Failure::Fatal(LlmError::InvalidResponse(reason)))
                }
            }
            Err(e) => Err(Failure::Transient(e.to_string())),
        }
    }
}

impl LlmProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.post("chat/completions", body)?;
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| LlmError::InvalidResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::InvalidResponse("response has no choices".into()))?;
        let usage = parsed
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(Completion { text, usage })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let value = self.post(
            "embeddings",
            json!({ "model": self.embedding_model, "input": texts }),
        )?;
        let mut parsed: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| LlmError::InvalidResponse(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(LlmError::InvalidResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}
