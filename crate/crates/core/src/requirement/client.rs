use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{normalize_sentence, PromptText, Requirement, RequirementSource};
use crate::error::{Error, Result};

/// Environment variable holding the bearer token for the chat endpoint.
pub const LLM_KEY_ENV: &str = "MODELGPT_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

/// Anything that can answer a chat-completion request with its final message.
pub trait ChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-4".into(),
            timeout_secs: 60,
        }
    }
}

/// Blocking JSON-over-HTTP chat-completion client.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    token: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(endpoint: &str, model: &str, token: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token: token.to_string(),
            agent,
        }
    }

    /// Builds a client from config plus the token in [`LLM_KEY_ENV`].
    pub fn from_config(cfg: &LlmConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::Config("llm.endpoint is not set".into()))?;
        let token = std::env::var(LLM_KEY_ENV)
            .map_err(|_| Error::Config(format!("{LLM_KEY_ENV} is not set")))?;
        Ok(Self::new(
            endpoint,
            &cfg.model,
            &token,
            Duration::from_secs(cfg.timeout_secs),
        ))
    }

    fn post_once(&self, body: &ChatRequest<'_>) -> Result<String, Attempt> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(body)
            .map_err(|e| Attempt::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(Error::Client(format!(
                "endpoint answered HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))));
        }
        parse_completion(&text).map_err(Attempt::Fatal)
    }
}

enum Attempt {
    Transport(String),
    Fatal(Error),
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = ChatRequest {
            model: &self.model,
            messages,
        };
        // one retry, transport failures only
        match self.post_once(&body) {
            Ok(s) => Ok(s),
            Err(Attempt::Fatal(e)) => Err(e),
            Err(Attempt::Transport(first)) => match self.post_once(&body) {
                Ok(s) => Ok(s),
                Err(Attempt::Fatal(e)) => Err(e),
                Err(Attempt::Transport(second)) => Err(Error::Client(format!(
                    "request failed twice: {first}; {second}"
                ))),
            },
        }
    }
}

/// Reads `choices[0].message.content` from a chat-completion response body.
pub fn parse_completion(body: &str) -> Result<String> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| Error::Client(format!("response is not JSON: {e}")))?;
    v.get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Client("response has no choices[0].message.content".into()))
}

/// Sends the prompt and normalizes the reply to a single sentence.
pub fn summarize(prompt: &PromptText, client: &dyn ChatClient) -> Result<Requirement> {
    let reply = client.complete(&[ChatMessage::user(prompt.as_str())])?;
    if normalize_sentence(&reply).is_none() {
        return Err(Error::DegenerateResponse);
    }
    Requirement::new(&reply, RequirementSource::Llm)
}
