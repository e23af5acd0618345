use serde::{Deserialize, Serialize};

use crate::http::{read_key, HttpError, JsonClient};

use super::{ChatMessage, LanguageModel, LlmConfig, LlmError, LlmRequest};

#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-compatible `/chat/completions` client.
#[derive(Debug)]
pub struct RemoteLlm {
    config: LlmConfig,
    client: JsonClient,
}

impl RemoteLlm {
    pub fn new(config: LlmConfig) -> Self {
        let client = JsonClient::new(config.retry.clone(), config.max_in_flight);
        Self { config, client }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl LanguageModel for RemoteLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let key = read_key(&self.config.api_key_env)?;
        let body = ChatCompletionRequest {
            model: &self.config.model,
            messages: &request.messages,
            temperature: self.config.temperature,
            max_tokens: self.config.max_output_tokens,
        };
        let resp: ChatCompletionResponse = self.client.post(&self.endpoint(), key.as_deref(), &body)?;
        let first = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| HttpError::Malformed("response has no choices".into()))?;
        Ok(first.message.content.unwrap_or_default())
    }

    fn identity(&self) -> String {
        format!("remote:{}", self.config.model)
    }
}
