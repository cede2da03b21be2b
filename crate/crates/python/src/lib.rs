//! Python module `horizon`: screening projects, reranking, metrics,
//! simulations and fixture scans.
//!
//! Structured results (reports, simulation output, scan documentation) come
//! back as JSON strings; `json.loads` them on the Python side.

use std::collections::HashMap;
use std::path::PathBuf;

use horizon_core::embedding::HashingEmbedder;
use horizon_core::eval::{self, SimRanker, SimulationConfig, Trajectory};
use horizon_core::io::{self, export_ris, import_csv};
use horizon_core::ranking::{self, EnsembleConfig};
use horizon_core::record::ColumnMapping;
use horizon_core::retrieval::{self, FixtureTransport, ScanParams, VirtualClock};
use horizon_core::{Label, RecordItem};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(runtime_err)
}

fn parse_label(s: &str) -> PyResult<Label> {
    s.parse::<Label>().map_err(value_err)
}

fn mapping(
    text_column: &str,
    label_column: Option<&str>,
    positive: Option<&str>,
    title_column: Option<&str>,
    id_column: Option<&str>,
) -> PyResult<ColumnMapping> {
    let mut m = ColumnMapping::new(text_column);
    match (label_column, positive) {
        (Some(c), Some(p)) => m = m.with_label(c, p),
        (None, None) => {}
        _ => return Err(PyValueError::new_err("label_column and positive go together")),
    }
    m.title_column = title_column.map(str::to_string);
    m.id_column = id_column.map(str::to_string);
    Ok(m)
}

/// A screening project held in memory.
#[pyclass(name = "Project", module = "horizon")]
pub struct PyProject {
    inner: horizon_core::Project,
}

#[pymethods]
impl PyProject {
    /// Import CSV bytes with a column mapping.
    #[staticmethod]
    #[pyo3(signature = (data, text_column, label_column=None, positive=None, title_column=None, id_column=None))]
    fn from_csv(
        data: &[u8],
        text_column: &str,
        label_column: Option<&str>,
        positive: Option<&str>,
        title_column: Option<&str>,
        id_column: Option<&str>,
    ) -> PyResult<Self> {
        let m = mapping(text_column, label_column, positive, title_column, id_column)?;
        Ok(Self {
            inner: import_csv(data, &m).map_err(value_err)?,
        })
    }

    /// Load a project saved with `save` (CSV or sidecar path).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_project(&path).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_project(&self.inner, &path).map_err(runtime_err)
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn iteration(&self) -> u32 {
        self.inner.iteration()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn record_ids(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.id.clone()).collect()
    }

    /// Label counts keyed by `include`, `exclude` and `unlabeled`.
    fn counts(&self) -> HashMap<&'static str, usize> {
        [Label::Include, Label::Exclude, Label::Unlabeled]
            .into_iter()
            .map(|l| (l.as_str(), self.inner.count(l)))
            .collect()
    }

    /// `label` is `include`, `exclude` or `unlabeled`.
    fn label(&mut self, record_id: &str, label: &str) -> PyResult<()> {
        let label = parse_label(label)?;
        self.inner.apply_label(record_id, label).map_err(value_err)
    }

    /// Rerank the unlabeled pool and return its ids, best first. Needs at
    /// least one include.
    #[pyo3(signature = (seed=None, ensemble_json=None, embedding_dimension=512))]
    fn rerank(
        &mut self,
        seed: Option<u64>,
        ensemble_json: Option<&str>,
        embedding_dimension: usize,
    ) -> PyResult<Vec<String>> {
        let config: EnsembleConfig = match ensemble_json {
            Some(s) => serde_json::from_str(s).map_err(value_err)?,
            None => EnsembleConfig::default(),
        };
        config.validate().map_err(value_err)?;
        let mut rng = match seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_os_rng(),
        };
        let embedder = HashingEmbedder::new(embedding_dimension.max(1));
        let state = ranking::rerank(&mut self.inner, &config, &mut rng, &embedder, None).map_err(value_err)?;
        Ok(state.ordering)
    }

    /// Next unlabeled record ids in screening order.
    #[pyo3(signature = (limit=None))]
    fn queue(&self, limit: Option<usize>) -> Vec<String> {
        self.inner.queue(limit).into_iter().map(|r| r.id.clone()).collect()
    }

    /// Mini-report JSON, the same bytes the service and `horizon report` emit.
    fn report_json(&self) -> PyResult<String> {
        let bytes = eval::project_report_json(&self.inner).map_err(value_err)?;
        String::from_utf8(bytes).map_err(runtime_err)
    }

    fn export_csv<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &io::export_csv(&self.inner, true))
    }

    fn export_ris<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let records: Vec<RecordItem> = self
            .inner
            .export_order()
            .into_iter()
            .map(|i| self.inner.records[i].clone())
            .collect();
        PyBytes::new(py, &export_ris(&records))
    }

    fn __repr__(&self) -> String {
        format!(
            "Project(id={:?}, records={}, iteration={})",
            self.inner.id,
            self.inner.records.len(),
            self.inner.iteration()
        )
    }
}

/// Work saved over sampling at recall `r` for a screening order of 0/1 flags.
#[pyfunction]
#[pyo3(signature = (relevant, r=eval::TARGET_RECALL))]
fn wss_at_r(relevant: Vec<bool>, r: f64) -> PyResult<f64> {
    eval::wss_at_r(&Trajectory::from_flags(&relevant), r).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (relevant, r=eval::TARGET_RECALL))]
fn tnr_at_r(relevant: Vec<bool>, r: f64) -> PyResult<f64> {
    eval::tnr_at_r(&Trajectory::from_flags(&relevant), r).map_err(value_err)
}

/// All per-run metrics of a screening order, as JSON.
#[pyfunction]
fn metrics_json(relevant: Vec<bool>) -> PyResult<String> {
    to_json(&eval::compute_metrics(&Trajectory::from_flags(&relevant)).map_err(value_err)?)
}

/// Replay screening on a fully labelled CSV. Returns the manifest and the
/// aggregated report as JSON.
#[pyfunction]
#[pyo3(signature = (
    data, text_column, label_column, positive, title_column=None, id_column=None,
    runs=eval::DEFAULT_RUNS, seeds=eval::DEFAULT_SEEDS, batch=eval::DEFAULT_BATCH, rng=42,
    ranker="engine", llm_votes=None, embedding_dimension=512
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    data: &[u8],
    text_column: &str,
    label_column: &str,
    positive: &str,
    title_column: Option<&str>,
    id_column: Option<&str>,
    runs: usize,
    seeds: usize,
    batch: usize,
    rng: u64,
    ranker: &str,
    llm_votes: Option<HashMap<String, u8>>,
    embedding_dimension: usize,
) -> PyResult<String> {
    let m = mapping(text_column, Some(label_column), Some(positive), title_column, id_column)?;
    let records = import_csv(data, &m).map_err(value_err)?.records;
    let config = SimulationConfig {
        n_runs: runs,
        n_seeds: seeds,
        batch_size: batch,
        rng_seed: rng,
        ranker: match ranker {
            "engine" => SimRanker::Engine,
            "oracle" => SimRanker::Oracle,
            "random" => SimRanker::Random,
            other => return Err(PyValueError::new_err(format!("unknown ranker {other:?}"))),
        },
        ensemble: EnsembleConfig {
            llm_enabled: llm_votes.is_some(),
            ..EnsembleConfig::default()
        },
        ..SimulationConfig::default()
    };
    let embedder = HashingEmbedder::new(embedding_dimension.max(1));
    let result = py
        .detach(|| eval::simulate(&records, &embedder, &config, llm_votes.as_ref()))
        .map_err(value_err)?;
    to_json(&serde_json::json!({ "manifest": result.manifest, "report": result.report }))
}

/// Run a scan against a fixture directory on a virtual clock. Returns the
/// three export files keyed by name.
#[pyfunction]
#[pyo3(signature = (queries, fixtures_dir, scrape=false))]
fn scan_fixtures<'py>(
    py: Python<'py>,
    queries: Vec<String>,
    fixtures_dir: PathBuf,
    scrape: bool,
) -> PyResult<HashMap<&'static str, Bound<'py, PyBytes>>> {
    let transport = FixtureTransport::from_dir(&fixtures_dir).map_err(value_err)?;
    let params = ScanParams {
        scrape_fulltext: scrape,
        ..ScanParams::default()
    };
    let result =
        retrieval::run_scan(&queries, &params, &VirtualClock::new(), &transport, &mut |_| {}).map_err(runtime_err)?;
    Ok(HashMap::from([
        (
            "search_documentation.csv",
            PyBytes::new(py, &retrieval::export_search_doc(&result.search_doc)),
        ),
        (
            "articles.csv",
            PyBytes::new(py, &retrieval::export_articles_csv(&result.articles)),
        ),
        (
            "articles.ris",
            PyBytes::new(py, &retrieval::export_articles_ris(&result.articles)),
        ),
    ]))
}

#[pymodule]
fn horizon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProject>()?;
    m.add_function(wrap_pyfunction!(wss_at_r, m)?)?;
    m.add_function(wrap_pyfunction!(tnr_at_r, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_json, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(scan_fixtures, m)?)?;
    Ok(())
}
