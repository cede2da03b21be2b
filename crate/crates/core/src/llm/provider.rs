use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{LlmError, ARTICLE_MARKER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A chat-completion backend.
pub trait ChatProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Rule {
    Yes(String),
    No(String),
    Error(String),
}

/// Offline provider driven by a rules file.
///
/// Each non-blank, non-`#` line is `YES <substring>`, `NO <substring>`,
/// `ERROR <substring>` or `DEFAULT <reply>`. The article text (everything
/// after the article marker, or the whole prompt without one) is matched
/// case-insensitively against the rules in file order; the first hit answers
/// `YES. …` / `NO. …` or fails like an unreachable endpoint. Without a hit
/// the `DEFAULT` reply is returned verbatim (`NO` if none is given).
#[derive(Debug)]
pub struct StubProvider {
    model_id: String,
    rules: Vec<Rule>,
    default_reply: String,
    calls: AtomicUsize,
}

impl StubProvider {
    pub fn from_rules(text: &str) -> Result<Self, LlmError> {
        let mut rules = Vec::new();
        let mut default_reply = "NO".to_string();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim().to_string();
            match kind.to_ascii_uppercase().as_str() {
                "YES" if !rest.is_empty() => rules.push(Rule::Yes(rest.to_lowercase())),
                "NO" if !rest.is_empty() => rules.push(Rule::No(rest.to_lowercase())),
                "ERROR" if !rest.is_empty() => rules.push(Rule::Error(rest.to_lowercase())),
                "DEFAULT" => default_reply = rest,
                _ => return Err(LlmError::Config(format!("rules line {}: cannot read {line:?}", n + 1))),
            }
        }
        Ok(Self {
            model_id: "stub".into(),
            rules,
            default_reply,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for StubProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let article = request
            .user
            .rsplit_once(ARTICLE_MARKER)
            .map_or(request.user.as_str(), |(_, text)| text)
            .to_lowercase();
        for rule in &self.rules {
            match rule {
                Rule::Yes(s) if article.contains(s.as_str()) => return Ok(format!("YES. Mentions \"{s}\".")),
                Rule::No(s) if article.contains(s.as_str()) => return Ok(format!("NO. Mentions \"{s}\".")),
                Rule::Error(s) if article.contains(s.as_str()) => {
                    return Err(LlmError::Transport("stub endpoint unreachable".into()))
                }
                _ => {}
            }
        }
        Ok(self.default_reply.clone())
    }
}

/// Endpoint speaking the common `/v1/chat/completions` wire format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenAiChatConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_timeout() -> u64 {
    120
}
fn default_max_tokens() -> u32 {
    512
}

impl OpenAiChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_tokens: default_max_tokens(),
        }
    }
}

pub struct OpenAiChatProvider {
    config: OpenAiChatConfig,
    agent: ureq::Agent,
    token: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl OpenAiChatProvider {
    pub fn new(config: OpenAiChatConfig) -> Result<Self, LlmError> {
        if config.endpoint.trim().is_empty() {
            return Err(LlmError::Config("empty endpoint".into()));
        }
        if config.model.trim().is_empty() {
            return Err(LlmError::Config("empty model id".into()));
        }
        let token = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self { config, agent, token })
    }

    pub fn max_tokens(&self) -> u32 {
        self.config.max_tokens
    }
}

impl ChatProvider for OpenAiChatProvider {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = req
            .send_json(json!({
                "model": self.config.model,
                "messages": messages,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            }))
            .map_err(|e| match e {
                ureq::Error::StatusCode(401 | 403) => LlmError::Auth(e.to_string()),
                ureq::Error::StatusCode(429) => LlmError::RateLimited(e.to_string()),
                ureq::Error::StatusCode(s) if s < 500 => LlmError::BadResponse(e.to_string()),
                other => LlmError::Transport(other.to_string()),
            })?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::BadResponse("no message content".into()))
    }
}
