use std::path::{Path, PathBuf};

use horizon_core::llm::BatchConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_PAYLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("environment variable {name}: {message}")]
    Env { name: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmProviderKind {
    #[default]
    None,
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Rule file for [`horizon_core::llm::StubProvider`].
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub provider: LlmProviderKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the variable holding the API key, never the key itself.
    pub api_key_env: Option<String>,
    pub stub_rules: Option<PathBuf>,
    pub batch: BatchConfig,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            provider: LlmProviderKind::None,
            endpoint: None,
            model: None,
            api_key_env: None,
            stub_rules: None,
            batch: BatchConfig::default(),
        }
    }
}

/// Service configuration. Read from a TOML file, then overridden by
/// `HORIZON_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub max_payload_bytes: usize,
    pub embedding_dimension: usize,
    pub rss_base_url: Option<String>,
    /// Serve scans from a fixture directory instead of the network.
    pub scan_fixtures: Option<PathBuf>,
    pub llm: LlmSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            max_payload_bytes: DEFAULT_MAX_PAYLOAD_BYTES,
            embedding_dimension: 512,
            rss_base_url: None,
            scan_fixtures: None,
            llm: LlmSettings::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// File (when given) plus the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        config.apply_env(|name| std::env::var(name).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(name: &'static str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.trim().parse().map_err(|e: T::Err| ConfigError::Env {
                name,
                message: e.to_string(),
            })
        }

        if let Some(v) = get("HORIZON_HOST") {
            self.host = v;
        }
        if let Some(v) = get("HORIZON_PORT") {
            self.port = parse("HORIZON_PORT", &v)?;
        }
        if let Some(v) = get("HORIZON_MAX_PAYLOAD_BYTES") {
            self.max_payload_bytes = parse("HORIZON_MAX_PAYLOAD_BYTES", &v)?;
        }
        if let Some(v) = get("HORIZON_EMBEDDING_DIMENSION") {
            self.embedding_dimension = parse("HORIZON_EMBEDDING_DIMENSION", &v)?;
        }
        if let Some(v) = get("HORIZON_RSS_BASE_URL") {
            self.rss_base_url = Some(v);
        }
        if let Some(v) = get("HORIZON_SCAN_FIXTURES") {
            self.scan_fixtures = Some(PathBuf::from(v));
        }
        if let Some(v) = get("HORIZON_LLM_PROVIDER") {
            self.llm.provider = match v.trim() {
                "none" => LlmProviderKind::None,
                "openai" => LlmProviderKind::Openai,
                "stub" => LlmProviderKind::Stub,
                other => {
                    return Err(ConfigError::Env {
                        name: "HORIZON_LLM_PROVIDER",
                        message: format!("unknown provider {other:?} (none, openai, stub)"),
                    })
                }
            };
        }
        if let Some(v) = get("HORIZON_LLM_ENDPOINT") {
            self.llm.endpoint = Some(v);
        }
        if let Some(v) = get("HORIZON_LLM_MODEL") {
            self.llm.model = Some(v);
        }
        if let Some(v) = get("HORIZON_LLM_API_KEY_ENV") {
            self.llm.api_key_env = Some(v);
        }
        if let Some(v) = get("HORIZON_LLM_STUB_RULES") {
            self.llm.stub_rules = Some(PathBuf::from(v));
        }
        if let Some(v) = get("HORIZON_LLM_MAX_CONCURRENCY") {
            self.llm.batch.max_concurrency = parse("HORIZON_LLM_MAX_CONCURRENCY", &v)?;
        }
        Ok(())
    }

    pub fn bind_address(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}
