//! Service configuration: a TOML file, then `VLQA_*` environment overrides.
//!
//! ```toml
//! port = 8080
//! videos = "library/videos.jsonl"
//! moments = "library/moments.jsonl"
//! cors_allowed_origins = ["http://localhost:5173"]
//!
//! [retriever]
//! min_queries = 5
//!
//! [llm]
//! endpoint = "http://localhost:11434/v1"
//! model = "mixtral"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;
use vlqa_core::answer::{AnswerGenerator, AnswerPrompts};
use vlqa_core::index::Bm25Params;
use vlqa_core::llm::{
    BoundedGateway, ChatGateway, GatewayError, HttpGateway, HttpGatewayConfig, ScriptedGateway, ENV_API_KEY,
    ENV_ENDPOINT, ENV_MODEL,
};
use vlqa_core::retriever::QueryPrompts;
use vlqa_core::timing::Clock;
use vlqa_core::{AnswerConfig, Pipeline, Retriever, RetrieverConfig};

pub const ENV_PORT: &str = "VLQA_PORT";
pub const ENV_VIDEOS: &str = "VLQA_VIDEOS";
pub const ENV_MOMENTS: &str = "VLQA_MOMENTS";
pub const ENV_SCRIPT: &str = "VLQA_LLM_SCRIPT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// JSON script for the offline gateway. Takes precedence over `endpoint`.
    pub script: Option<PathBuf>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key: None,
            model: None,
            timeout_secs: 60.0,
            max_retries: 2,
            backoff_ms: 500,
            script: None,
        }
    }
}

impl fmt::Debug for LlmSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmSettings")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("backoff_ms", &self.backoff_ms)
            .field("script", &self.script)
            .finish()
    }
}

/// Optional prompt template overrides, one text file each.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptFiles {
    pub querygen_system: Option<PathBuf>,
    pub querygen_user: Option<PathBuf>,
    pub querygen_retry_system: Option<PathBuf>,
    pub answergen_system: Option<PathBuf>,
    pub answergen_empty: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    pub videos: Option<PathBuf>,
    pub moments: Option<PathBuf>,
    pub strict: bool,
    pub cors_allowed_origins: Vec<String>,
    /// Upper bound on concurrent LLM calls across all requests.
    pub max_in_flight: usize,
    /// Report zero for every timing so responses are byte-stable.
    pub deterministic: bool,
    pub retriever: RetrieverConfig,
    pub answer: AnswerConfig,
    pub bm25: Bm25Params,
    pub llm: LlmSettings,
    pub prompts: PromptFiles,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            videos: None,
            moments: None,
            strict: false,
            cors_allowed_origins: Vec::new(),
            max_in_flight: 8,
            deterministic: false,
            retriever: RetrieverConfig::default(),
            answer: AnswerConfig::default(),
            bm25: Bm25Params::default(),
            llm: LlmSettings::default(),
            prompts: PromptFiles::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })
    }

    /// Reads a config file and resolves its relative paths. Does not apply
    /// environment overrides.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml_str(&read_text(path)?, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.videos);
        resolve(base, &mut cfg.moments);
        resolve(base, &mut cfg.llm.script);
        let p = &mut cfg.prompts;
        for slot in [
            &mut p.querygen_system,
            &mut p.querygen_user,
            &mut p.querygen_retry_system,
            &mut p.answergen_system,
            &mut p.answergen_empty,
        ] {
            resolve(base, slot);
        }
        Ok(cfg)
    }

    pub fn apply_env(self) -> Result<Self, ConfigError> {
        self.apply_env_with(|k| std::env::var(k).ok())
    }

    pub fn apply_env_with(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        if let Some(v) = lookup(ENV_PORT) {
            self.port = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_PORT}={v} is not a port number")))?;
        }
        if let Some(v) = lookup(ENV_VIDEOS) {
            self.videos = Some(v.into());
        }
        if let Some(v) = lookup(ENV_MOMENTS) {
            self.moments = Some(v.into());
        }
        if let Some(v) = lookup(ENV_ENDPOINT) {
            self.llm.endpoint = Some(v);
        }
        if let Some(v) = lookup(ENV_API_KEY) {
            self.llm.api_key = Some(v);
        }
        if let Some(v) = lookup(ENV_MODEL) {
            self.llm.model = Some(v);
        }
        if let Some(v) = lookup(ENV_SCRIPT) {
            self.llm.script = Some(v.into());
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.port == 0 {
            return Err(ConfigError::Invalid("port must be in [1, 65535]".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::Invalid("max_in_flight must be >= 1".into()));
        }
        if !self.bm25.is_valid() {
            return Err(ConfigError::Invalid("bm25 requires k1 >= 0 and b in [0, 1]".into()));
        }
        if !self.llm.timeout_secs.is_finite() || self.llm.timeout_secs <= 0.0 {
            return Err(ConfigError::Invalid("llm.timeout_secs must be positive".into()));
        }
        self.retriever
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn clock(&self) -> Clock {
        if self.deterministic {
            Clock::Frozen
        } else {
            Clock::Wall
        }
    }

    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        let mut qp = QueryPrompts::default();
        let mut ap = AnswerPrompts::default();
        let p = &self.prompts;
        for (slot, file) in [
            (&mut qp.system, &p.querygen_system),
            (&mut qp.user, &p.querygen_user),
            (&mut qp.retry_system, &p.querygen_retry_system),
            (&mut ap.system, &p.answergen_system),
            (&mut ap.empty_retrieval, &p.answergen_empty),
        ] {
            if let Some(path) = file {
                *slot = read_text(path)?;
            }
        }
        let mut answerer = AnswerGenerator::new(self.answer.clone());
        answerer.prompts = ap;
        let pipeline = Pipeline {
            retriever: Retriever {
                config: self.retriever,
                prompts: qp,
                bm25: self.bm25,
            },
            answerer,
            clock: Clock::Wall,
        };
        Ok(pipeline.with_clock(self.clock()))
    }

    /// The scripted gateway when a script is configured, otherwise the HTTP
    /// gateway, either way capped at `max_in_flight` concurrent calls.
    pub fn gateway(&self) -> Result<Arc<dyn ChatGateway>, ConfigError> {
        let inner: Arc<dyn ChatGateway> = match &self.llm.script {
            Some(path) => Arc::new(ScriptedGateway::from_json_file(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?),
            None => {
                let l = &self.llm;
                Arc::new(HttpGateway::new(HttpGatewayConfig {
                    endpoint: l.endpoint.clone().unwrap_or_default(),
                    api_key: l.api_key.clone(),
                    model: l.model.clone().unwrap_or_default(),
                    timeout: Duration::from_secs_f64(l.timeout_secs),
                    max_retries: l.max_retries,
                    backoff_base: Duration::from_millis(l.backoff_ms),
                })?)
            }
        };
        Ok(Arc::new(BoundedGateway::new(inner, self.max_in_flight)))
    }
}
