use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Timeframe;

/// A feed search to perform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedRequest {
    pub query: String,
    pub timeframe: Option<Timeframe>,
}

/// Status and body of an HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: String,
}

impl Reply {
    pub fn ok(body: impl Into<String>, content_type: &str) -> Self {
        Self {
            status: 200,
            content_type: Some(content_type.to_string()),
            body: body.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
}

impl TransportError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// Network access used by a scan. Implementations do no pacing; the scan
/// scheduler owns the delays.
pub trait Transport: Send + Sync {
    fn fetch_feed(&self, request: &FeedRequest) -> Result<Reply, TransportError>;
    /// Decode a feed link into the publisher's URL.
    fn resolve(&self, feed_url: &str) -> Result<String, TransportError>;
    fn fetch_page(&self, url: &str) -> Result<Reply, TransportError>;
}

/// Live endpoint settings. Every field can be overridden from the
/// environment, see [`LiveConfig::from_env`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    pub hl: String,
    pub gl: String,
    pub ceid: String,
    pub user_agent: String,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: "https://news.google.com/rss/search".into(),
            hl: "en-GB".into(),
            gl: "GB".into(),
            ceid: "GB:en".into(),
            user_agent: concat!("horizon-scan/", env!("CARGO_PKG_VERSION")).into(),
            timeout_secs: 30,
        }
    }
}

impl LiveConfig {
    /// Defaults overridden by `HORIZON_RSS_BASE_URL`, `HORIZON_RSS_HL`,
    /// `HORIZON_RSS_GL`, `HORIZON_RSS_CEID` and `HORIZON_HTTP_TIMEOUT_SECS`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("HORIZON_RSS_BASE_URL") {
            c.base_url = v;
        }
        if let Some(v) = var("HORIZON_RSS_HL") {
            c.hl = v;
        }
        if let Some(v) = var("HORIZON_RSS_GL") {
            c.gl = v;
        }
        if let Some(v) = var("HORIZON_RSS_CEID") {
            c.ceid = v;
        }
        if let Some(v) = var("HORIZON_HTTP_TIMEOUT_SECS").and_then(|v| v.parse().ok()) {
            c.timeout_secs = v;
        }
        c
    }
}

/// Encode the query the way the news search endpoint expects: the timeframe
/// rides inside `q` as `after:YYYY-MM-DD` / `before:YYYY-MM-DD` operators.
pub fn encode_query(request: &FeedRequest) -> String {
    let mut q = request.query.clone();
    if let Some(tf) = &request.timeframe {
        if let Some(start) = tf.start {
            q.push_str(&format!(" after:{}", start.format("%Y-%m-%d")));
        }
        if let Some(end) = tf.end {
            q.push_str(&format!(" before:{}", end.format("%Y-%m-%d")));
        }
    }
    q
}

/// HTTPS transport for the live endpoint.
pub struct HttpTransport {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .user_agent(config.user_agent.as_str())
            .build()
            .into();
        Self { config, agent }
    }

    fn reply(mut response: ureq::http::Response<ureq::Body>) -> Result<Reply, TransportError> {
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = response
            .body_mut()
            .with_config()
            .limit(16 * 1024 * 1024)
            .read_to_string()
            .map_err(|e| TransportError::new(e.to_string()))?;
        Ok(Reply {
            status,
            content_type,
            body,
        })
    }
}

impl Transport for HttpTransport {
    fn fetch_feed(&self, request: &FeedRequest) -> Result<Reply, TransportError> {
        let response = self
            .agent
            .get(&self.config.base_url)
            .query("q", encode_query(request))
            .query("hl", &self.config.hl)
            .query("gl", &self.config.gl)
            .query("ceid", &self.config.ceid)
            .call()
            .map_err(|e| TransportError::new(e.to_string()))?;
        Self::reply(response)
    }

    fn resolve(&self, feed_url: &str) -> Result<String, TransportError> {
        use ureq::ResponseExt;
        let response = self
            .agent
            .get(feed_url)
            .call()
            .map_err(|e| TransportError::new(e.to_string()))?;
        if !response.status().is_success() {
            return Err(TransportError::new(format!("status {}", response.status())));
        }
        let final_url = response.get_uri().to_string();
        if final_url.trim_end_matches('/') == feed_url.trim_end_matches('/') {
            return Err(TransportError::new("link did not redirect to a publisher"));
        }
        Ok(final_url)
    }

    fn fetch_page(&self, url: &str) -> Result<Reply, TransportError> {
        let response = self
            .agent
            .get(url)
            .call()
            .map_err(|e| TransportError::new(e.to_string()))?;
        Self::reply(response)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureManifest {
    #[serde(default)]
    feeds: HashMap<String, FixtureFeed>,
    #[serde(default)]
    redirects: HashMap<String, String>,
    #[serde(default)]
    pages: HashMap<String, FixturePage>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum FixtureFeed {
    File(PathBuf),
    Status { status: u16 },
}

#[derive(Debug, Clone, Deserialize)]
struct FixturePage {
    file: PathBuf,
    #[serde(default = "html")]
    content_type: String,
}

fn html() -> String {
    "text/html".into()
}

/// Offline transport serving canned responses.
///
/// On disk, a fixture directory holds a `manifest.json`:
///
/// ```json
/// {
///   "feeds":     { "<query>": "feeds/q1.xml", "<query2>": { "status": 429 } },
///   "redirects": { "<feed link>": "<publisher url>" },
///   "pages":     { "<url>": { "file": "pages/a.html", "content_type": "text/html" } }
/// }
/// ```
///
/// Paths are relative to the directory. Queries without a feed entry get an
/// empty feed; links without a redirect or page entry fail like dead links.
#[derive(Debug, Default)]
pub struct FixtureTransport {
    feeds: HashMap<String, Reply>,
    redirects: HashMap<String, String>,
    pages: HashMap<String, Reply>,
    feed_calls: AtomicUsize,
    resolve_calls: AtomicUsize,
    page_calls: AtomicUsize,
}

pub const EMPTY_FEED: &str = "<?xml version=\"1.0\"?><rss version=\"2.0\"><channel></channel></rss>";

impl FixtureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_dir(dir: &Path) -> Result<Self, TransportError> {
        let read = |p: &Path| {
            std::fs::read_to_string(dir.join(p))
                .map_err(|e| TransportError::new(format!("{}: {e}", dir.join(p).display())))
        };
        let manifest: FixtureManifest = serde_json::from_str(&read(Path::new("manifest.json"))?)
            .map_err(|e| TransportError::new(format!("manifest.json: {e}")))?;
        let mut t = Self::new();
        for (query, feed) in manifest.feeds {
            let reply = match feed {
                FixtureFeed::File(path) => Reply::ok(read(&path)?, "application/rss+xml"),
                FixtureFeed::Status { status } => Reply {
                    status,
                    content_type: None,
                    body: String::new(),
                },
            };
            t.feeds.insert(query, reply);
        }
        t.redirects = manifest.redirects;
        for (url, page) in manifest.pages {
            t.pages.insert(url, Reply::ok(read(&page.file)?, &page.content_type));
        }
        Ok(t)
    }

    pub fn with_feed(mut self, query: &str, xml: impl Into<String>) -> Self {
        self.feeds
            .insert(query.to_string(), Reply::ok(xml, "application/rss+xml"));
        self
    }

    pub fn with_feed_reply(mut self, query: &str, reply: Reply) -> Self {
        self.feeds.insert(query.to_string(), reply);
        self
    }

    pub fn with_redirect(mut self, from: &str, to: &str) -> Self {
        self.redirects.insert(from.to_string(), to.to_string());
        self
    }

    pub fn with_page(mut self, url: &str, content_type: &str, body: impl Into<String>) -> Self {
        self.pages.insert(url.to_string(), Reply::ok(body, content_type));
        self
    }

    pub fn feed_calls(&self) -> usize {
        self.feed_calls.load(Ordering::SeqCst)
    }

    pub fn resolve_calls(&self) -> usize {
        self.resolve_calls.load(Ordering::SeqCst)
    }

    pub fn page_calls(&self) -> usize {
        self.page_calls.load(Ordering::SeqCst)
    }
}

impl Transport for FixtureTransport {
    fn fetch_feed(&self, request: &FeedRequest) -> Result<Reply, TransportError> {
        self.feed_calls.fetch_add(1, Ordering::SeqCst);
        Ok(self
            .feeds
            .get(&request.query)
            .cloned()
            .unwrap_or_else(|| Reply::ok(EMPTY_FEED, "application/rss+xml")))
    }

    fn resolve(&self, feed_url: &str) -> Result<String, TransportError> {
        self.resolve_calls.fetch_add(1, Ordering::SeqCst);
        self.redirects
            .get(feed_url)
            .cloned()
            .ok_or_else(|| TransportError::new(format!("cannot resolve {feed_url}")))
    }

    fn fetch_page(&self, url: &str) -> Result<Reply, TransportError> {
        self.page_calls.fetch_add(1, Ordering::SeqCst);
        self.pages
            .get(url)
            .cloned()
            .ok_or_else(|| TransportError::new(format!("no response from {url}")))
    }
}
