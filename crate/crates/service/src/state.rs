use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use horizon_core::embedding::{Embedder, HashingEmbedder};
use horizon_core::llm::{ChatProvider, OpenAiChatConfig, OpenAiChatProvider, StubProvider};
use horizon_core::ranking::Reranker;
use horizon_core::retrieval::{
    Clock, FixtureTransport, HttpTransport, LiveConfig, ScanParams, ScanResult, ScanWarning, SearchDocEntry,
    SystemClock, Transport, VirtualClock,
};
use horizon_core::Project;
use serde::{Deserialize, Serialize};

use crate::config::{LlmProviderKind, ServiceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryState {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryProgress {
    pub query: String,
    pub state: QueryState,
    pub n_retrieved: Option<usize>,
    pub error: Option<String>,
}

/// A scan run in the background, polled through `GET /scans/{id}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanJob {
    pub scan_id: String,
    pub status: JobStatus,
    /// Every status the job has been in, in order.
    pub history: Vec<JobStatus>,
    pub params: ScanParams,
    pub queries: Vec<QueryProgress>,
    pub articles_scraped: usize,
    pub articles_to_scrape: usize,
    pub n_articles: Option<usize>,
    pub search_doc: Vec<SearchDocEntry>,
    pub warnings: Vec<ScanWarning>,
    pub failed_queries: Vec<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub result: Option<ScanResult>,
}

impl ScanJob {
    pub fn new(scan_id: String, queries: &[String], params: ScanParams) -> Self {
        Self {
            scan_id,
            status: JobStatus::Queued,
            history: vec![JobStatus::Queued],
            params,
            queries: queries
                .iter()
                .map(|q| QueryProgress {
                    query: q.clone(),
                    state: QueryState::Pending,
                    n_retrieved: None,
                    error: None,
                })
                .collect(),
            articles_scraped: 0,
            articles_to_scrape: 0,
            n_articles: None,
            search_doc: Vec::new(),
            warnings: Vec::new(),
            failed_queries: Vec::new(),
            error: None,
            result: None,
        }
    }

    pub fn set_status(&mut self, status: JobStatus) {
        self.status = status;
        self.history.push(status);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmCounts {
    pub model_id: String,
    pub n_judged: usize,
    pub n_include_votes: usize,
    pub n_exclude_votes: usize,
    /// Judgements per parse status.
    pub by_status: BTreeMap<String, usize>,
}

/// A batch classification job, polled through
/// `GET /projects/{id}/llm/{job_id}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmJob {
    pub job_id: String,
    pub project_id: String,
    pub status: JobStatus,
    pub history: Vec<JobStatus>,
    pub total: usize,
    pub completed: usize,
    pub counts: Option<LlmCounts>,
    pub error: Option<String>,
}

impl LlmJob {
    pub fn set_status(&mut self, status: JobStatus) {
        self.status = status;
        self.history.push(status);
    }
}

/// One live project. The async mutex serialises every mutation.
pub struct ProjectSlot {
    pub project: Arc<tokio::sync::Mutex<Project>>,
    /// Embeddings are computed on the first rerank and reused after.
    pub reranker: Mutex<Option<Arc<Reranker>>>,
    rerank_busy: AtomicBool,
}

impl ProjectSlot {
    fn new(project: Project) -> Self {
        Self {
            project: Arc::new(tokio::sync::Mutex::new(project)),
            reranker: Mutex::new(None),
            rerank_busy: AtomicBool::new(false),
        }
    }

    /// Claim the rerank slot, or `None` if a rerank is already running.
    pub fn try_begin_rerank(self: &Arc<Self>) -> Option<RerankGuard> {
        self.rerank_busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| RerankGuard(Arc::clone(self)))
    }
}

pub struct RerankGuard(Arc<ProjectSlot>);

impl Drop for RerankGuard {
    fn drop(&mut self) {
        self.0.rerank_busy.store(false, Ordering::Release);
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub embedder: Arc<dyn Embedder>,
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<dyn Clock>,
    pub provider: Option<Arc<dyn ChatProvider>>,
    projects: RwLock<HashMap<String, Arc<ProjectSlot>>>,
    scans: RwLock<HashMap<String, Arc<Mutex<ScanJob>>>>,
    llm_jobs: RwLock<HashMap<String, Arc<Mutex<LlmJob>>>>,
    job_counter: AtomicU64,
}

impl AppState {
    /// Hashing embedder, an empty fixture transport on a virtual clock and
    /// no LLM provider. Nothing touches the network.
    pub fn offline(config: ServiceConfig) -> Self {
        Self {
            embedder: Arc::new(HashingEmbedder::new(config.embedding_dimension)),
            transport: Arc::new(FixtureTransport::new()),
            clock: Arc::new(VirtualClock::new()),
            provider: None,
            config,
            projects: RwLock::default(),
            scans: RwLock::default(),
            llm_jobs: RwLock::default(),
            job_counter: AtomicU64::new(0),
        }
    }

    /// Wire up transports and providers as the configuration asks.
    pub fn from_config(config: ServiceConfig) -> Result<Self, String> {
        let mut state = Self::offline(config.clone());
        match &config.scan_fixtures {
            Some(dir) => {
                state.transport = Arc::new(FixtureTransport::from_dir(dir).map_err(|e| e.to_string())?);
            }
            None => {
                let mut live = LiveConfig::from_env();
                if let Some(url) = &config.rss_base_url {
                    live.base_url = url.clone();
                }
                state.transport = Arc::new(HttpTransport::new(live));
                state.clock = Arc::new(SystemClock::default());
            }
        }
        state.provider = match config.llm.provider {
            LlmProviderKind::None => None,
            LlmProviderKind::Stub => {
                let path = config
                    .llm
                    .stub_rules
                    .as_ref()
                    .ok_or("llm.stub_rules is required for the stub provider")?;
                let rules = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                Some(Arc::new(StubProvider::from_rules(&rules).map_err(|e| e.to_string())?))
            }
            LlmProviderKind::Openai => {
                let endpoint = config.llm.endpoint.clone().ok_or("llm.endpoint is required")?;
                let model = config.llm.model.clone().ok_or("llm.model is required")?;
                let mut chat = OpenAiChatConfig::new(endpoint, model);
                if let Some(var) = &config.llm.api_key_env {
                    chat.api_key_env = Some(var.clone());
                }
                chat.max_tokens = config.llm.batch.max_tokens;
                Some(Arc::new(OpenAiChatProvider::new(chat).map_err(|e| e.to_string())?))
            }
        };
        Ok(state)
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_provider(mut self, provider: Arc<dyn ChatProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn next_id(&self, prefix: &str) -> String {
        format!("{prefix}-{}", self.job_counter.fetch_add(1, Ordering::Relaxed) + 1)
    }

    /// Register a project. A second upload of the same content gets a
    /// numbered id.
    pub fn insert_project(&self, mut project: Project) -> String {
        let mut projects = self.projects.write().expect("project map poisoned");
        let base = project.id.clone();
        let mut n = 1;
        while projects.contains_key(&project.id) {
            n += 1;
            project.id = format!("{base}-{n}");
        }
        let id = project.id.clone();
        projects.insert(id.clone(), Arc::new(ProjectSlot::new(project)));
        id
    }

    pub fn project(&self, id: &str) -> Option<Arc<ProjectSlot>> {
        self.projects.read().expect("project map poisoned").get(id).cloned()
    }

    pub fn insert_scan(&self, job: ScanJob) -> Arc<Mutex<ScanJob>> {
        let id = job.scan_id.clone();
        let job = Arc::new(Mutex::new(job));
        self.scans
            .write()
            .expect("scan map poisoned")
            .insert(id, Arc::clone(&job));
        job
    }

    pub fn scan(&self, id: &str) -> Option<Arc<Mutex<ScanJob>>> {
        self.scans.read().expect("scan map poisoned").get(id).cloned()
    }

    pub fn insert_llm_job(&self, job: LlmJob) -> Arc<Mutex<LlmJob>> {
        let id = job.job_id.clone();
        let job = Arc::new(Mutex::new(job));
        self.llm_jobs
            .write()
            .expect("job map poisoned")
            .insert(id, Arc::clone(&job));
        job
    }

    pub fn llm_job(&self, id: &str) -> Option<Arc<Mutex<LlmJob>>> {
        self.llm_jobs.read().expect("job map poisoned").get(id).cloned()
    }
}
