use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Embedder, EmbeddingError};
use crate::io::truncate_chars;

/// Connection settings for an external encoder served over HTTP with the
/// common `/v1/embeddings` wire format (`{"model", "input": [..]}` in,
/// `{"data": [{"embedding": [..]}]}` out).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Inputs longer than this many characters are cut before sending.
    #[serde(default = "default_max_chars")]
    pub max_input_chars: usize,
}

fn default_timeout_secs() -> u64 {
    60
}
fn default_batch() -> usize {
    32
}
fn default_max_chars() -> usize {
    2000
}

impl RemoteEmbedderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            batch_size: default_batch(),
            max_input_chars: default_max_chars(),
        }
    }
}

/// Adapter for a SPECTER-class encoder behind an HTTP endpoint.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    name: String,
    agent: ureq::Agent,
    token: Option<String>,
    dimension: usize,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    /// Validate the configuration and discover the vector dimension with a
    /// probe request.
    pub fn connect(config: RemoteEmbedderConfig) -> Result<Self, EmbeddingError> {
        if config.endpoint.trim().is_empty() {
            return Err(EmbeddingError::Config("empty endpoint".into()));
        }
        if config.batch_size == 0 {
            return Err(EmbeddingError::Config("batch_size must be positive".into()));
        }
        let token = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| EmbeddingError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        let mut embedder = Self {
            name: format!("remote:{}", config.model),
            config,
            agent,
            token,
            dimension: 0,
        };
        let probe = embedder.request(&["dimension probe"])?;
        embedder.dimension = probe
            .first()
            .map(Vec::len)
            .filter(|&d| d > 0)
            .ok_or_else(|| EmbeddingError::Transport("probe returned no vector".into()))?;
        Ok(embedder)
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let inputs: Vec<&str> = texts
            .iter()
            .map(|t| {
                let cut = truncate_chars(t, self.config.max_input_chars);
                if cut.len() < t.len() {
                    tracing::debug!(limit = self.config.max_input_chars, "encoder input truncated");
                }
                cut
            })
            .collect();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = req
            .send_json(json!({ "model": self.config.model, "input": inputs }))
            .map_err(|e| match e {
                ureq::Error::StatusCode(401 | 403) => {
                    EmbeddingError::Config(format!("endpoint rejected credentials: {e}"))
                }
                other => EmbeddingError::Transport(other.to_string()),
            })?;
        let parsed: EmbeddingResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::Transport(format!("bad response body: {e}")))?;
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    /// Model inference is repeatable to within float noise only.
    fn deterministic(&self) -> bool {
        false
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size) {
            let vectors = self.request(chunk)?;
            if vectors.len() != chunk.len() {
                return Err(EmbeddingError::Transport(format!(
                    "endpoint returned {} vectors for {} inputs",
                    vectors.len(),
                    chunk.len()
                )));
            }
            out.extend(vectors);
        }
        Ok(out)
    }
}
