//! Uniform chat-completion and embedding interface.
//!
//! Three provider kinds sit behind [`LlmProvider`]: a remote API, a locally
//! hosted server (both speaking the OpenAI-style JSON protocol) and a
//! scripted provider that answers from regex rules for tests and CI.

mod http;
mod scripted;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpProvider, RetryPolicy};
pub use scripted::{hash_embedding, ScriptRule, ScriptedProvider, HASH_EMBEDDING_DIM};

pub const DEFAULT_TEMPERATURE: f32 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("provider {provider} unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable {
        provider: String,
        attempts: u32,
        reason: String,
    },
    #[error("no script rule matches the request (last user message: {last_user_message:?})")]
    ScriptExhausted { last_user_message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    InvalidResponse(String),
    #[error("provider configuration error: {0}")]
    Config(String),
}

impl LlmError {
    /// True for failures that a later attempt might not hit.
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::ProviderUnavailable { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_tokens: u32,
    /// Conversation the request belongs to; scripted providers keep their
    /// per-conversation state under this key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<String>,
    /// 1-based conversation turn index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<u32>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Result<Self, LlmError> {
        let request = ChatRequest {
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            conversation: None,
            turn: None,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("messages must not be empty".into())),
            Some(m) if !matches!(m.role, Role::System | Role::User) => Err(
                LlmError::InvalidRequest("first message must be a system or user message".into()),
            ),
            _ if self.temperature.is_nan() || self.temperature < 0.0 => {
                Err(LlmError::InvalidRequest("temperature must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError>;

    /// One vector per input text, all of the provider's fixed dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    RemoteApi,
    LocalServer,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials_ref: Option<String>,
    /// Script file for the scripted provider, relative to the config's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn scripted(script: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Scripted,
            endpoint: None,
            model: "scripted".into(),
            embedding_model: None,
            credentials_ref: None,
            script: Some(script.into()),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            ProviderKind::RemoteApi | ProviderKind::LocalServer if self.endpoint.is_none() => Err(
                LlmError::Config(format!("{:?} provider requires an endpoint", self.kind)),
            ),
            ProviderKind::Scripted if self.script.is_none() => {
                Err(LlmError::Config("scripted provider requires a script file".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Instantiates the provider described by `config`. Relative script paths
/// resolve against `base_dir`.
pub fn build_provider(
    config: &ProviderConfig,
    base_dir: &Path,
) -> Result<Arc<dyn LlmProvider>, LlmError> {
    config.validate()?;
    Ok(match config.kind {
        ProviderKind::Scripted => {
            let script = config.script.as_ref().expect("validated");
            let path = if script.is_absolute() {
                script.clone()
            } else {
                base_dir.join(script)
            };
            Arc::new(ScriptedProvider::from_file(&path)?)
        }
        ProviderKind::RemoteApi | ProviderKind::LocalServer => {
            Arc::new(HttpProvider::from_config(config)?)
        }
    })
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
