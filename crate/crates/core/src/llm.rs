//! Chat-completion access to an instruction-tuned LLM.
//!
//! [`HttpGateway`] speaks the OpenAI-compatible `/chat/completions` JSON
//! protocol. [`ScriptedGateway`] answers from pre-registered text keyed on a
//! `[tag:NAME]` marker in the system prompt and never touches the network.

use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::{debug, warn};

pub const ENV_ENDPOINT: &str = "VLQA_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "VLQA_LLM_API_KEY";
pub const ENV_MODEL: &str = "VLQA_LLM_MODEL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("upstream error (HTTP {status}): {body}")]
    Upstream { status: u16, body: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited")]
    RateLimited,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("no scripted response for tag {tag:?}")]
    ScriptMiss { tag: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Empty means "use the gateway's configured model".
    pub model: String,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.0,
            max_tokens: 1024,
            model: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        for m in &self.messages {
            if m.role != Role::Assistant && m.content.trim().is_empty() {
                return Err(GatewayError::InvalidRequest(format!("empty {:?} message", m.role)));
            }
        }
        Ok(())
    }

    pub fn system_prompt(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// The `[tag:NAME]` marker of the system prompt, if any.
    pub fn tag(&self) -> Option<&str> {
        self.system_prompt().and_then(extract_tag)
    }
}

/// Finds the first `[tag:NAME]` marker in `text`.
pub fn extract_tag(text: &str) -> Option<&str> {
    let start = text.find("[tag:")? + "[tag:".len();
    let len = text[start..].find(']')?;
    let tag = text[start..start + len].trim();
    (!tag.is_empty()).then_some(tag)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
    pub latency_ms: f64,
}

#[async_trait]
pub trait ChatGateway: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

#[async_trait]
impl<G: ChatGateway + ?Sized> ChatGateway for Arc<G> {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request).await
    }
}

#[derive(Clone)]
pub struct HttpGatewayConfig {
    /// Base URL such as `https://api.example.com/v1`; `/chat/completions` is
    /// appended unless already present.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for HttpGatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key: None,
            model: String::new(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl fmt::Debug for HttpGatewayConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpGatewayConfig")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff_base", &self.backoff_base)
            .finish()
    }
}

impl HttpGatewayConfig {
    /// Overrides fields from `VLQA_LLM_*` environment variables when set.
    pub fn apply_env(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            self.model = v;
        }
        self
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-compatible HTTP client with bounded exponential-backoff retries.
pub struct HttpGateway {
    config: HttpGatewayConfig,
    client: reqwest::Client,
}

impl HttpGateway {
    pub fn new(config: HttpGatewayConfig) -> Result<Self, GatewayError> {
        if config.endpoint.is_empty() {
            return Err(GatewayError::InvalidRequest("no LLM endpoint configured".into()));
        }
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpGatewayConfig {
        &self.config
    }

    async fn attempt(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let model = if request.model.is_empty() {
            self.config.model.as_str()
        } else {
            request.model.as_str()
        };
        let body = WireRequest {
            model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let started = Instant::now();
        let mut builder = self.client.post(self.config.completions_url()).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().await.map_err(|e| self.classify_transport(e))?;
        let status = resp.status().as_u16();
        match status {
            401 | 403 => return Err(GatewayError::Auth { status }),
            429 => return Err(GatewayError::RateLimited),
            s if s >= 400 => {
                let body = resp.text().await.unwrap_or_default();
                return Err(GatewayError::Upstream {
                    status: s,
                    body: truncate(&body, 512),
                });
            }
            _ => {}
        }
        let wire: WireResponse = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout(self.config.timeout)
            } else {
                GatewayError::MalformedResponse(e.to_string())
            }
        })?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::MalformedResponse("no choices in response".into()))?;
        Ok(ChatResponse {
            content,
            usage: wire.usage.unwrap_or_default(),
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }

    fn classify_transport(&self, e: reqwest::Error) -> GatewayError {
        if e.is_timeout() {
            GatewayError::Timeout(self.config.timeout)
        } else {
            GatewayError::Transport(e.to_string())
        }
    }
}

fn is_retryable(err: &GatewayError) -> bool {
    match err {
        GatewayError::Timeout(_) | GatewayError::RateLimited | GatewayError::Transport(_) => true,
        GatewayError::Upstream { status, .. } => *status >= 500,
        _ => false,
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

#[async_trait]
impl ChatGateway for HttpGateway {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        debug!(
            url = %self.config.completions_url(),
            tag = request.tag().unwrap_or("-"),
            messages = request.messages.len(),
            "chat completion request"
        );
        let mut attempt = 0u32;
        loop {
            match self.attempt(request).await {
                Ok(resp) => {
                    debug!(latency_ms = resp.latency_ms, chars = resp.content.len(), "chat completion response");
                    return Ok(resp);
                }
                Err(err) if is_retryable(&err) && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_base * 2u32.pow(attempt);
                    warn!(error = %err, attempt, ?delay, "retrying chat completion");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub tag: String,
    /// Restricts the rule to requests whose last user message contains this
    /// text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_contains: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub rules: Vec<ScriptRule>,
}

/// Deterministic offline LLM. The first rule matching the request's tag (and
/// optional user-message filter) wins.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGateway {
    script: Script,
}

impl ScriptedGateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_script(script: Script) -> Self {
        Self { script }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let script: Script =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::from_script(script))
    }

    pub fn with_response(mut self, tag: impl Into<String>, response: impl Into<String>) -> Self {
        self.script.rules.push(ScriptRule {
            tag: tag.into(),
            user_contains: None,
            response: response.into(),
        });
        self
    }

    pub fn with_rule(mut self, rule: ScriptRule) -> Self {
        self.script.rules.push(rule);
        self
    }

    pub fn lookup(&self, request: &ChatRequest) -> Result<&str, GatewayError> {
        let tag = request.tag();
        let user = request.last_user_message().unwrap_or("");
        self.script
            .rules
            .iter()
            .find(|r| {
                Some(r.tag.as_str()) == tag
                    && r.user_contains.as_deref().is_none_or(|needle| user.contains(needle))
            })
            .map(|r| r.response.as_str())
            .ok_or_else(|| GatewayError::ScriptMiss {
                tag: tag.map(str::to_string),
            })
    }
}

#[async_trait]
impl ChatGateway for ScriptedGateway {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let content = self.lookup(request)?.to_string();
        let prompt_tokens = request
            .messages
            .iter()
            .map(|m| m.content.split_whitespace().count() as u64)
            .sum();
        let completion_tokens = content.split_whitespace().count() as u64;
        Ok(ChatResponse {
            content,
            usage: Usage {
                prompt_tokens,
                completion_tokens,
            },
            latency_ms: 0.0,
        })
    }
}

/// Caps the number of completions in flight across all callers.
pub struct BoundedGateway<G> {
    inner: G,
    permits: Semaphore,
}

impl<G: ChatGateway> BoundedGateway<G> {
    pub fn new(inner: G, max_in_flight: usize) -> Self {
        Self {
            inner,
            permits: Semaphore::new(max_in_flight.max(1)),
        }
    }

    pub fn available_permits(&self) -> usize {
        self.permits.available_permits()
    }
}

#[async_trait]
impl<G: ChatGateway> ChatGateway for BoundedGateway<G> {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| GatewayError::Transport("gateway closed".into()))?;
        self.inner.complete(request).await
    }
}
