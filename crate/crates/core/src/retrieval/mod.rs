//! Bulk news retrieval.
//!
//! A scan posts each query to an RSS news search, merges duplicates as the
//! items stream in, optionally scrapes the full text of every unique article
//! once, ranks the result by search-engine page and duplicate count, and
//! produces the three export files. Network access and time are injected
//! through [`Transport`] and [`Clock`] so the whole pipeline runs offline
//! against fixtures and a virtual clock.

mod clock;
mod export;
mod feed;
mod scrape;
mod transport;

use std::cmp::Reverse;
use std::time::Duration;

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use self::clock::{Clock, RateGate, SystemClock, VirtualClock};
pub use self::export::{export_articles_csv, export_articles_ris, export_search_doc, ARTICLE_COLUMNS};
pub use self::feed::{parse_feed, FeedItem, ParsedFeed};
pub use self::scrape::{extract_text, is_html};
pub use self::transport::{
    encode_query, FeedRequest, FixtureTransport, HttpTransport, LiveConfig, Reply, Transport, TransportError,
    EMPTY_FEED,
};

use crate::io::truncate_chars;

pub const MAX_PER_QUERY: usize = 100;
pub const RESULTS_PER_PAGE: usize = 10;
/// Scraped text shorter than this many characters triggers a warning.
pub const THIN_TEXT_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Timeframe {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    pub timeframe: Option<Timeframe>,
    pub max_per_query: usize,
    pub scrape_fulltext: bool,
    #[serde(with = "secs")]
    pub inter_query_delay: Duration,
    #[serde(with = "secs")]
    pub inter_resolve_delay: Duration,
    pub fulltext_truncate: usize,
    /// Follow feed links to the publisher before scraping. When off, the
    /// page behind the feed link is scraped as is.
    pub decode_redirects: bool,
    /// Attempts per query for retryable failures.
    pub max_attempts: u32,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            timeframe: None,
            max_per_query: MAX_PER_QUERY,
            scrape_fulltext: false,
            inter_query_delay: Duration::from_secs(3),
            inter_resolve_delay: Duration::from_millis(1500),
            fulltext_truncate: 30_000,
            decode_redirects: true,
            max_attempts: 3,
        }
    }
}

impl ScanParams {
    pub fn validate(&self) -> Result<(), ScanError> {
        if !(1..=MAX_PER_QUERY).contains(&self.max_per_query) {
            return Err(ScanError::InvalidParams(format!(
                "max_per_query must be in 1..={MAX_PER_QUERY}, got {}",
                self.max_per_query
            )));
        }
        if self.max_attempts == 0 {
            return Err(ScanError::InvalidParams("max_attempts must be at least 1".into()));
        }
        if let Some(Timeframe {
            start: Some(s),
            end: Some(e),
        }) = self.timeframe
        {
            if s > e {
                return Err(ScanError::InvalidParams(format!(
                    "timeframe starts after it ends ({s} > {e})"
                )));
            }
        }
        Ok(())
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

/// A unique article with the provenance of every retrieval event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub dedup_key: String,
    pub title: String,
    pub feed_url: String,
    pub resolved_url: Option<String>,
    pub outlet: String,
    pub published: Option<NaiveDate>,
    /// One entry per retrieval event, repeats included.
    pub queries: Vec<String>,
    pub dup_count: u32,
    pub min_page_rank: u32,
    /// 1-based order in which the article was first seen during the scan.
    pub first_seen_position: u32,
    pub full_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchDocEntry {
    pub query: String,
    pub n_results_reported: u64,
    pub n_retrieved: u64,
    pub n_new_unique: u64,
}

/// One feed item as delivered, with its 1-based position in the feed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawItem {
    pub title: String,
    pub feed_url: String,
    pub outlet: String,
    pub published: Option<NaiveDate>,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOutcome {
    pub raw_items: Vec<RawItem>,
    /// `None` when the feed carries no total.
    pub n_results_reported: Option<u64>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScanError {
    #[error("no queries")]
    NoQueries,
    #[error("invalid scan parameters: {0}")]
    InvalidParams(String),
    #[error("query {query:?}: {message} (after {attempts} attempt(s))")]
    Transport {
        query: String,
        message: String,
        attempts: u32,
    },
    #[error("query {query:?}: rate limited (HTTP {status}) after {attempts} attempt(s)")]
    RateLimited { query: String, status: u16, attempts: u32 },
    #[error("query {query:?}: HTTP {status}")]
    Status { query: String, status: u16 },
    #[error("query {query:?}: malformed feed: {message}")]
    MalformedFeed {
        query: String,
        message: String,
        payload: String,
    },
    #[error("every query failed: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    AllQueriesFailed(Vec<ScanError>),
}

impl ScanError {
    fn retryable(&self) -> bool {
        matches!(self, Self::Transport { .. } | Self::RateLimited { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanWarning {
    /// The query or the article key the warning is about.
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ScanProgress {
    QueryDone {
        index: usize,
        total: usize,
        query: String,
        n_retrieved: usize,
    },
    QueryFailed {
        index: usize,
        total: usize,
        query: String,
        error: String,
    },
    ArticleScraped {
        index: usize,
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Ranked.
    pub articles: Vec<NewsArticle>,
    pub search_doc: Vec<SearchDocEntry>,
    pub warnings: Vec<ScanWarning>,
    /// Queries that failed; the scan still succeeds if at least one worked.
    pub failed_queries: Vec<String>,
}

/// Owns the clock and the two rate gates of a scan, and records the start
/// time of every feed request and every link resolution.
pub struct Scheduler<'a> {
    clock: &'a dyn Clock,
    query_gate: RateGate,
    resolve_gate: RateGate,
    pub fetch_log: Vec<Duration>,
    pub resolve_log: Vec<Duration>,
}

impl<'a> Scheduler<'a> {
    pub fn new(clock: &'a dyn Clock, params: &ScanParams) -> Self {
        Self {
            clock,
            query_gate: RateGate::new(params.inter_query_delay),
            resolve_gate: RateGate::new(params.inter_resolve_delay),
            fetch_log: Vec::new(),
            resolve_log: Vec::new(),
        }
    }

    fn before_fetch(&mut self) {
        let t = self.query_gate.wait(self.clock);
        self.fetch_log.push(t);
    }

    fn before_resolve(&mut self) {
        let t = self.resolve_gate.wait(self.clock);
        self.resolve_log.push(t);
    }
}

/// One query per non-blank line, trimmed, in file order. Repeated lines are
/// kept since each is a separate search.
pub fn parse_query_file(bytes: &[u8]) -> Result<Vec<String>, ScanError> {
    let text = String::from_utf8_lossy(bytes);
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let queries: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if queries.is_empty() {
        return Err(ScanError::NoQueries);
    }
    Ok(queries)
}

/// Results page of a 1-based feed position, ten results per page.
pub fn page_of(position: usize) -> Result<u32, ScanError> {
    if position == 0 {
        return Err(ScanError::InvalidParams("positions start at 1".into()));
    }
    Ok(position.div_ceil(RESULTS_PER_PAGE) as u32)
}

pub fn dedup_key(title: &str, feed_url: &str) -> String {
    format!("{title}\u{1f}{feed_url}")
}

/// Fetch one query's feed, retrying transport failures and rate limiting
/// with exponential backoff that starts at the inter-query delay.
pub fn fetch_query(
    query: &str,
    params: &ScanParams,
    scheduler: &mut Scheduler<'_>,
    transport: &dyn Transport,
) -> Result<FetchOutcome, ScanError> {
    let request = FeedRequest {
        query: query.to_string(),
        timeframe: params.timeframe,
    };
    let mut attempt = 0;
    loop {
        attempt += 1;
        scheduler.before_fetch();
        let result = fetch_once(&request, params, transport, attempt);
        match result {
            Err(e) if e.retryable() && attempt < params.max_attempts => {
                let backoff = params.inter_query_delay * 2u32.pow(attempt - 1);
                tracing::warn!(query, attempt, ?backoff, error = %e, "retrying feed request");
                scheduler.clock.sleep(backoff);
            }
            Err(e) => return Err(e),
            Ok(mut outcome) => {
                outcome.attempts = attempt;
                return Ok(outcome);
            }
        }
    }
}

fn fetch_once(
    request: &FeedRequest,
    params: &ScanParams,
    transport: &dyn Transport,
    attempts: u32,
) -> Result<FetchOutcome, ScanError> {
    let query = &request.query;
    let reply = transport.fetch_feed(request).map_err(|e| ScanError::Transport {
        query: query.clone(),
        message: e.message,
        attempts,
    })?;
    match reply.status {
        200..=299 => {}
        429 | 503 => {
            return Err(ScanError::RateLimited {
                query: query.clone(),
                status: reply.status,
                attempts,
            })
        }
        500..=599 => {
            return Err(ScanError::Transport {
                query: query.clone(),
                message: format!("HTTP {}", reply.status),
                attempts,
            })
        }
        status => {
            return Err(ScanError::Status {
                query: query.clone(),
                status,
            })
        }
    }
    let feed = parse_feed(&reply.body).map_err(|message| ScanError::MalformedFeed {
        query: query.clone(),
        message,
        payload: reply.body.clone(),
    })?;
    let raw_items = feed
        .items
        .into_iter()
        .filter(|item| !item.title.is_empty() || !item.link.is_empty())
        .take(params.max_per_query)
        .enumerate()
        .map(|(i, item)| RawItem {
            title: item.title,
            feed_url: item.link,
            outlet: item.outlet,
            published: item.published,
            position: i + 1,
        })
        .collect();
    Ok(FetchOutcome {
        raw_items,
        n_results_reported: feed.total_results,
        attempts,
    })
}

/// Merge one retrieval event into the store. Returns true when the item was
/// new.
pub fn dedup_merge(store: &mut IndexMap<String, NewsArticle>, item: &RawItem, query: &str) -> bool {
    let page = page_of(item.position).expect("feed positions start at 1");
    let key = dedup_key(&item.title, &item.feed_url);
    if let Some(existing) = store.get_mut(&key) {
        existing.dup_count += 1;
        existing.queries.push(query.to_string());
        existing.min_page_rank = existing.min_page_rank.min(page);
        return false;
    }
    let first_seen_position = store.len() as u32 + 1;
    store.insert(
        key.clone(),
        NewsArticle {
            dedup_key: key,
            title: item.title.clone(),
            feed_url: item.feed_url.clone(),
            resolved_url: None,
            outlet: item.outlet.clone(),
            published: item.published,
            queries: vec![query.to_string()],
            dup_count: 1,
            min_page_rank: page,
            first_seen_position,
            full_text: None,
        },
    );
    true
}

/// Resolve the article's link and scrape its text. Failures leave the
/// article without text and are returned as warnings.
pub fn resolve_and_scrape(
    article: &mut NewsArticle,
    params: &ScanParams,
    scheduler: &mut Scheduler<'_>,
    transport: &dyn Transport,
) -> Vec<ScanWarning> {
    let warn = |message: String| ScanWarning {
        subject: article.feed_url.clone(),
        message,
    };
    scheduler.before_resolve();
    let target = if params.decode_redirects {
        match transport.resolve(&article.feed_url) {
            Ok(url) => {
                article.resolved_url = Some(url.clone());
                url
            }
            Err(e) => return vec![warn(format!("could not resolve link: {e}"))],
        }
    } else {
        article.feed_url.clone()
    };
    let reply = match transport.fetch_page(&target) {
        Ok(r) => r,
        Err(e) => return vec![warn(format!("could not fetch {target}: {e}"))],
    };
    if !(200..300).contains(&reply.status) {
        return vec![warn(format!("HTTP {} from {target}", reply.status))];
    }
    if !is_html(reply.content_type.as_deref()) {
        return vec![warn(format!(
            "not an HTML page ({}): {target}",
            reply.content_type.as_deref().unwrap_or("")
        ))];
    }
    let text = extract_text(&reply.body);
    let mut warnings = Vec::new();
    let n_chars = text.chars().count();
    if n_chars < THIN_TEXT_CHARS {
        warnings.push(warn(format!("only {n_chars} characters of body text extracted")));
    }
    article.full_text = Some(truncate_chars(&text, params.fulltext_truncate).to_string());
    warnings
}

/// Sort by best page ascending, then duplicate count descending, then first
/// appearance.
pub fn self_supervised_rank(mut articles: Vec<NewsArticle>) -> Vec<NewsArticle> {
    articles.sort_by_key(|a| (a.min_page_rank, Reverse(a.dup_count), a.first_seen_position));
    articles
}

/// Run a full scan: queries in order with pacing, streaming de-duplication,
/// optional scraping of each unique article, then ranking.
pub fn run_scan(
    queries: &[String],
    params: &ScanParams,
    clock: &dyn Clock,
    transport: &dyn Transport,
    progress: &mut dyn FnMut(ScanProgress),
) -> Result<ScanResult, ScanError> {
    let mut scheduler = Scheduler::new(clock, params);
    run_scan_with(queries, params, &mut scheduler, transport, progress)
}

/// [`run_scan`] with a caller-owned scheduler, so the request logs can be
/// inspected afterwards.
pub fn run_scan_with(
    queries: &[String],
    params: &ScanParams,
    scheduler: &mut Scheduler<'_>,
    transport: &dyn Transport,
    progress: &mut dyn FnMut(ScanProgress),
) -> Result<ScanResult, ScanError> {
    if queries.is_empty() {
        return Err(ScanError::NoQueries);
    }
    params.validate()?;

    let mut store: IndexMap<String, NewsArticle> = IndexMap::new();
    let mut search_doc = Vec::with_capacity(queries.len());
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    let mut failed_queries = Vec::new();
    let total = queries.len();

    for (index, query) in queries.iter().enumerate() {
        match fetch_query(query, params, scheduler, transport) {
            Ok(outcome) => {
                let n_retrieved = outcome.raw_items.len() as u64;
                let n_new_unique = outcome
                    .raw_items
                    .iter()
                    .filter(|item| dedup_merge(&mut store, item, query))
                    .count() as u64;
                let n_results_reported = match outcome.n_results_reported {
                    Some(n) => n,
                    None => {
                        warnings.push(ScanWarning {
                            subject: query.clone(),
                            message: "feed reports no result total; using the retrieved count".into(),
                        });
                        n_retrieved
                    }
                };
                search_doc.push(SearchDocEntry {
                    query: query.clone(),
                    n_results_reported,
                    n_retrieved,
                    n_new_unique,
                });
                progress(ScanProgress::QueryDone {
                    index,
                    total,
                    query: query.clone(),
                    n_retrieved: n_retrieved as usize,
                });
            }
            Err(e) => {
                tracing::warn!(query = %query, error = %e, "query failed");
                warnings.push(ScanWarning {
                    subject: query.clone(),
                    message: format!("query failed: {e}"),
                });
                search_doc.push(SearchDocEntry {
                    query: query.clone(),
                    n_results_reported: 0,
                    n_retrieved: 0,
                    n_new_unique: 0,
                });
                progress(ScanProgress::QueryFailed {
                    index,
                    total,
                    query: query.clone(),
                    error: e.to_string(),
                });
                failed_queries.push(query.clone());
                errors.push(e);
            }
        }
    }
    if errors.len() == queries.len() {
        return Err(ScanError::AllQueriesFailed(errors));
    }

    let mut articles: Vec<NewsArticle> = store.into_values().collect();
    if params.scrape_fulltext {
        let n = articles.len();
        for (index, article) in articles.iter_mut().enumerate() {
            warnings.extend(resolve_and_scrape(article, params, scheduler, transport));
            progress(ScanProgress::ArticleScraped { index, total: n });
        }
    }

    Ok(ScanResult {
        articles: self_supervised_rank(articles),
        search_doc,
        warnings,
        failed_queries,
    })
}
