//! Chat-completion gateway: message types, the prompt registry, and two
//! backends (a remote OpenAI-compatible client and a scripted transcript
//! player for deterministic runs).

mod parse;
mod remote;
mod scripted;
mod templates;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{HttpError, RetryPolicy};

pub use parse::{parse_list_response, ParsedList};
pub use remote::RemoteLlm;
pub use scripted::{CallRecord, ScriptedLlm, Transcript, TranscriptEntry, TranscriptError};
pub use templates::{render_prompt, PromptTemplate, TemplateId};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("template {template}: missing binding {name:?}")]
    MissingBinding { template: TemplateId, name: String },
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("transcript exhausted: no response for ({template}, call {ordinal})")]
    TranscriptExhausted { template: TemplateId, ordinal: u32 },
    #[error("transcript mismatch at ({template}, call {ordinal}): expected prompt digest {expected}, got {actual}")]
    TranscriptMismatch {
        template: TemplateId,
        ordinal: u32,
        expected: String,
        actual: String,
    },
    #[error("invalid llm configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// A rendered prompt tagged with the template it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmRequest {
    pub template: TemplateId,
    pub messages: Vec<ChatMessage>,
}

impl LlmRequest {
    pub fn render(template: TemplateId, bindings: &[(&str, &str)]) -> Result<Self, LlmError> {
        Ok(Self {
            template,
            messages: render_prompt(template, bindings)?,
        })
    }

    /// Hex SHA-256 over roles and contents.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update(serde_json::to_string(&m.role).expect("role serializes"));
            h.update([0u8]);
            h.update(m.content.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError>;

    fn identity(&self) -> String;
}

/// Hands out one model handle per run. Scripted backends need a fresh
/// transcript cursor per run; remote backends share one client.
pub trait LlmProvider: Send + Sync {
    fn session(&self, scope: &str) -> Arc<dyn LanguageModel>;
}

impl<F> LlmProvider for F
where
    F: Fn(&str) -> Arc<dyn LanguageModel> + Send + Sync,
{
    fn session(&self, scope: &str) -> Arc<dyn LanguageModel> {
        self(scope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackend {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub backend: LlmBackend,
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub transcript: Option<PathBuf>,
    pub strict: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: LlmBackend::Remote,
            base_url: "http://localhost:8000/v1".into(),
            model: "qwen2.5-7b-instruct".into(),
            api_key_env: "KGSEARCH_LLM_API_KEY".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            transcript: None,
            strict: false,
        }
    }
}

impl LlmConfig {
    pub fn scripted(transcript: impl Into<PathBuf>) -> Self {
        Self {
            backend: LlmBackend::Scripted,
            transcript: Some(transcript.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        match self.backend {
            LlmBackend::Scripted if self.transcript.is_none() => {
                Err(LlmError::Config("scripted backend requires a transcript path".into()))
            }
            LlmBackend::Scripted if self.temperature != 0.0 => {
                Err(LlmError::Config("scripted runs require temperature 0".into()))
            }
            LlmBackend::Remote if self.base_url.is_empty() => {
                Err(LlmError::Config("remote backend requires base_url".into()))
            }
            _ => Ok(()),
        }
    }
}

struct RemoteProvider(Arc<RemoteLlm>);

impl LlmProvider for RemoteProvider {
    fn session(&self, _scope: &str) -> Arc<dyn LanguageModel> {
        self.0.clone()
    }
}

struct ScriptedProvider {
    transcript: Transcript,
    strict: bool,
}

impl LlmProvider for ScriptedProvider {
    fn session(&self, scope: &str) -> Arc<dyn LanguageModel> {
        Arc::new(ScriptedLlm::new(self.transcript.scoped(scope)).strict(self.strict))
    }
}

/// Builds a provider from configuration. Scripted transcripts are read once.
pub fn provider_from_config(config: &LlmConfig) -> Result<Arc<dyn LlmProvider>, LlmError> {
    config.validate()?;
    match config.backend {
        LlmBackend::Remote => Ok(Arc::new(RemoteProvider(Arc::new(RemoteLlm::new(config.clone()))))),
        LlmBackend::Scripted => {
            let path = config.transcript.as_ref().expect("validated");
            let transcript = Transcript::load(path).map_err(|e| LlmError::Config(e.to_string()))?;
            Ok(Arc::new(ScriptedProvider {
                transcript,
                strict: config.strict,
            }))
        }
    }
}

/// Provider over an in-memory transcript.
pub fn scripted_provider(transcript: Transcript, strict: bool) -> Arc<dyn LlmProvider> {
    Arc::new(ScriptedProvider { transcript, strict })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_content_and_role() {
        let a = LlmRequest {
            template: TemplateId::FinalAnswer,
            messages: vec![ChatMessage::user("x")],
        };
        let mut b = a.clone();
        b.messages[0].role = Role::System;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn scripted_config_needs_transcript_and_zero_temperature() {
        let mut c = LlmConfig {
            backend: LlmBackend::Scripted,
            ..LlmConfig::default()
        };
        assert!(c.validate().is_err());
        c.transcript = Some("t.jsonl".into());
        assert!(c.validate().is_ok());
        c.temperature = 0.7;
        assert!(c.validate().is_err());
    }
}
