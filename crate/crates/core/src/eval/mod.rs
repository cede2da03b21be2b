//! Screening evaluation.
//!
//! Metrics are computed on a [`Trajectory`], the order in which records
//! were (or would have been) screened, against gold relevance labels.
//! [`simulate`] replays the active-learning loop on a fully labelled dataset
//! to produce such trajectories, and [`mini_report`] treats the records
//! viewed so far in a live project as if they were the whole dataset.

mod metrics;
mod simulate;
pub mod synthetic;

use serde::{Deserialize, Serialize};

pub use self::metrics::{
    aggregate_runs, average_precision, compute_metrics, confusion_at, cutoff_for_fraction, first_crossing, gain_curve,
    gain_curve_csv, last_include_pct, mean_sd, precision, recall, recall_at_fraction, report_text, runs_csv, tnr_at_r,
    wss_at_r, AggregateMetrics, ConfusionCounts, GainCurve, GainPoint, MetricError, MetricsReport, RunMetrics, SdKind,
    Stat, Trajectory, RECALL_FRACTIONS, RUN_COLUMNS, TARGET_RECALL,
};
pub use self::simulate::{
    gold_labels, run_seeds, simulate, simulate_run, RerankLog, RunManifest, RunOutcome, SimRanker, SimulationConfig,
    SimulationError, SimulationResult, DEFAULT_BATCH, DEFAULT_RUNS, DEFAULT_SEEDS, SMALL_P_THRESHOLD,
};

use crate::ranking::RankingSummary;
use crate::record::{Label, LabelSource, Project};

pub const PARTIAL_DATA_NOTICE: &str = "based on partially screened data";

/// Metrics over the records viewed so far, in viewing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniReport {
    pub notice: String,
    pub n_viewed: usize,
    pub n_includes: usize,
    pub n_excludes: usize,
    pub wss95: f64,
    /// Normalised WSS@95, i.e. TNR@95. `None` until something is excluded.
    pub nwss95: Option<f64>,
    pub recall50: f64,
    pub recall75: f64,
    pub metrics: RunMetrics,
    pub gain_curve: GainCurve,
}

pub fn mini_report(project: &Project) -> Result<MiniReport, MetricError> {
    let viewed = project.viewed_order();
    let trajectory = Trajectory::new(
        viewed
            .iter()
            .map(|&i| {
                let r = &project.records[i];
                (r.id.clone(), r.label == Label::Include)
            })
            .collect(),
    );
    let metrics = compute_metrics(&trajectory)?;
    // imported labels play the part of seeds
    let seed_prefix = viewed
        .iter()
        .take_while(|&&i| project.records[i].label_source == Some(LabelSource::GoldImport))
        .count();
    let gain_curve = gain_curve(&trajectory, seed_prefix)?;
    Ok(MiniReport {
        notice: PARTIAL_DATA_NOTICE.to_string(),
        n_viewed: trajectory.n(),
        n_includes: trajectory.p(),
        n_excludes: trajectory.n() - trajectory.p(),
        wss95: metrics.wss95,
        nwss95: metrics.tnr95,
        recall50: metrics.recall50,
        recall75: metrics.recall75,
        metrics,
        gain_curve,
    })
}

/// Mini-report of a live project together with the provenance of every
/// rerank so far. Its JSON form is what both the HTTP service and the
/// command line emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub project_id: String,
    pub iteration: u32,
    #[serde(flatten)]
    pub report: MiniReport,
    pub rerank_history: Vec<RankingSummary>,
}

pub fn project_report(project: &Project) -> Result<ProjectReport, MetricError> {
    Ok(ProjectReport {
        project_id: project.id.clone(),
        iteration: project.iteration(),
        report: mini_report(project)?,
        rerank_history: project.ranking_history.clone(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn project_report_json(project: &Project) -> Result<Vec<u8>, MetricError> {
    let report = project_report(project)?;
    let mut out = serde_json::to_vec_pretty(&report).expect("report serialises");
    out.push(b'\n');
    Ok(out)
}

#[cfg(test)]
mod tests;
