use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_runs, compute_metrics, MetricError, MetricsReport, RunMetrics, SdKind, Trajectory};
use crate::embedding::Embedder;
use crate::ranking::{EnsembleConfig, RankerKind, RankingError, RankingSummary, Reranker};
use crate::record::{Label, RecordItem};

pub const DEFAULT_RUNS: usize = 15;
pub const DEFAULT_SEEDS: usize = 5;
pub const DEFAULT_BATCH: usize = 10;
/// Below this many relevant records a single seed is used.
pub const SMALL_P_THRESHOLD: usize = 30;

/// What orders the pool between reveals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimRanker {
    /// The active-learning ensemble.
    #[default]
    Engine,
    /// Relevant records first; an upper bound.
    Oracle,
    /// Shuffled order; the baseline WSS corrects for.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_runs: usize,
    pub n_seeds: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub ensemble: EnsembleConfig,
    pub ranker: SimRanker,
    /// Leave the seeds out of the evaluated trajectory instead of counting
    /// them as screened.
    pub seeds_free: bool,
    pub sd_kind: SdKind,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_runs: DEFAULT_RUNS,
            n_seeds: DEFAULT_SEEDS,
            batch_size: DEFAULT_BATCH,
            rng_seed: 42,
            ensemble: EnsembleConfig::default(),
            ranker: SimRanker::Engine,
            seeds_free: false,
            sd_kind: SdKind::Population,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.n_runs == 0 {
            return Err(SimulationError::Config("n_runs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(SimulationError::Config("batch_size must be at least 1".into()));
        }
        if self.n_seeds == 0 {
            return Err(SimulationError::Config("n_seeds must be at least 1".into()));
        }
        self.ensemble.validate().map_err(SimulationError::Config)
    }

    /// Seeds actually used for a dataset with `p` relevant records.
    pub fn effective_seeds(&self, p: usize) -> usize {
        if p < SMALL_P_THRESHOLD {
            1
        } else {
            self.n_seeds
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("dataset has {found} relevant records but {needed} seeds are required")]
    TooFewRelevant { needed: usize, found: usize },
    #[error("dataset has no irrelevant records")]
    NoIrrelevant,
    #[error("dataset records are not all labeled")]
    Unlabeled,
    #[error("LLM votes cover {got} records, dataset has {expected}")]
    LlmLength { expected: usize, got: usize },
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Condensed log of one rerank inside a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankLog {
    pub iteration: u32,
    pub ranker: RankerKind,
    pub base_ranker: RankerKind,
    pub fallback: bool,
    pub n_seeds_used: usize,
    pub n_includes: usize,
    /// Rows of the classifier training set, when the classifier ran.
    pub training_rows: Option<usize>,
    pub n_excludes_sampled: Option<usize>,
    pub n_excludes_available: Option<usize>,
    pub llm_applied: bool,
    pub min_score: Option<f64>,
    pub max_score: Option<f64>,
}

impl RerankLog {
    fn from_summary(s: &RankingSummary, n_includes: usize) -> Self {
        Self {
            iteration: s.iteration,
            ranker: s.ranker_used,
            base_ranker: s.base_ranker,
            fallback: s.fallback,
            n_seeds_used: s.seeds_used.len(),
            n_includes,
            training_rows: s.training.as_ref().map(|t| t.n_includes + t.n_excludes_sampled),
            n_excludes_sampled: s.training.as_ref().map(|t| t.n_excludes_sampled),
            n_excludes_available: s.training.as_ref().map(|t| t.n_excludes_available),
            llm_applied: s.llm_applied,
            min_score: s.min_score,
            max_score: s.max_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub run_seed: u64,
    pub seed_ids: Vec<String>,
    /// Screening order. Starts with the seeds unless `seeds_free`.
    pub trajectory: Trajectory,
    pub metrics: RunMetrics,
    pub reranks: Vec<RerankLog>,
}

/// Everything needed to audit or repeat a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub n_records: usize,
    pub n_relevant: usize,
    pub n_runs: usize,
    pub n_seeds_requested: usize,
    pub n_seeds_effective: usize,
    pub small_p_threshold: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub run_seeds: Vec<u64>,
    pub ranker: SimRanker,
    pub seeds_free: bool,
    pub sgd_period: Option<u32>,
    pub max_seeds: usize,
    pub neg_ratio: usize,
    pub llm_enabled: bool,
    pub llm_votes_supplied: bool,
    /// How the LLM vote enters the score.
    pub combine_rule: String,
    pub score_range: (f64, f64),
    pub embedder: String,
    pub sd_kind: SdKind,
    pub reranks: Vec<Vec<RerankLog>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub manifest: RunManifest,
    pub runs: Vec<RunOutcome>,
    pub report: MetricsReport,
}

/// Gold relevance of each record. Every record must carry a label.
pub fn gold_labels(records: &[RecordItem]) -> Result<Vec<bool>, SimulationError> {
    records
        .iter()
        .map(|r| match r.label {
            Label::Include => Ok(true),
            Label::Exclude => Ok(false),
            Label::Unlabeled => Err(SimulationError::Unlabeled),
        })
        .collect()
}

/// Per-run seeds drawn from the master seed.
pub fn run_seeds(master: u64, n_runs: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n_runs).map(|_| rng.random()).collect()
}

/// Replay one screening session on gold labels.
///
/// The dataset is shuffled, `n_seeds` random relevant records are revealed
/// first, and then the pool is reranked and its top `batch_size` records
/// revealed until nothing is left. `llm_bits` are aligned with `ids`.
pub fn simulate_run(
    reranker: &Reranker,
    ids: &[String],
    gold: &[bool],
    config: &SimulationConfig,
    run_seed: u64,
    llm_bits: Option<&[Option<u8>]>,
) -> Result<(Trajectory, Vec<String>, Vec<RerankLog>), SimulationError> {
    let n = gold.len();
    assert_eq!(ids.len(), n, "ids must align with gold labels");
    let p = gold.iter().filter(|&&g| g).count();
    let n_seeds = config.effective_seeds(p);
    if p < n_seeds {
        return Err(SimulationError::TooFewRelevant {
            needed: n_seeds,
            found: p,
        });
    }
    if p == n {
        return Err(SimulationError::NoIrrelevant);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);

    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let mut shuffle_pos = vec![0; n];
    for (pos, &i) in shuffled.iter().enumerate() {
        shuffle_pos[i] = pos;
    }

    let relevant: Vec<usize> = shuffled.iter().copied().filter(|&i| gold[i]).collect();
    let seeds: Vec<usize> = rand::seq::index::sample(&mut rng, relevant.len(), n_seeds)
        .into_iter()
        .map(|j| relevant[j])
        .collect();

    let mut labels = vec![Label::Unlabeled; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for &s in &seeds {
        labels[s] = Label::Include;
        order.push(s);
    }
    let index_of: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut logs = Vec::new();
    let mut iteration = 0;
    while order.len() < n {
        let mut pool: Vec<usize> = shuffled
            .iter()
            .copied()
            .filter(|&i| labels[i] == Label::Unlabeled)
            .collect();
        match config.ranker {
            SimRanker::Random => {}
            SimRanker::Oracle => pool.sort_by_key(|&i| !gold[i]),
            SimRanker::Engine => {
                iteration += 1;
                let (state, summary) = reranker.rerank(&labels, iteration, &config.ensemble, &mut rng, llm_bits)?;
                let n_includes = labels.iter().filter(|&&l| l == Label::Include).count();
                logs.push(RerankLog::from_summary(&summary, n_includes));
                let score: HashMap<usize, f64> = state
                    .ordering
                    .iter()
                    .zip(state.final_scores())
                    .map(|(id, &s)| (index_of[id.as_str()], s))
                    .collect();
                // ties follow the shuffled order, not import order
                pool.sort_by(|&a, &b| {
                    score[&b]
                        .total_cmp(&score[&a])
                        .then(shuffle_pos[a].cmp(&shuffle_pos[b]))
                });
            }
        }
        for &i in pool.iter().take(config.batch_size) {
            labels[i] = if gold[i] { Label::Include } else { Label::Exclude };
            order.push(i);
        }
    }

    let start = if config.seeds_free { seeds.len() } else { 0 };
    let trajectory = Trajectory::new(order[start..].iter().map(|&i| (ids[i].clone(), gold[i])).collect());
    let seed_ids = seeds.iter().map(|&i| ids[i].clone()).collect();
    Ok((trajectory, seed_ids, logs))
}

/// Run `n_runs` independent simulations (in parallel) and aggregate their
/// metrics. `llm_votes` maps record ids to 0/1 votes.
pub fn simulate<E: Embedder + ?Sized>(
    records: &[RecordItem],
    embedder: &E,
    config: &SimulationConfig,
    llm_votes: Option<&HashMap<String, u8>>,
) -> Result<SimulationResult, SimulationError> {
    config.validate()?;
    let gold = gold_labels(records)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let p = gold.iter().filter(|&&g| g).count();
    let n_seeds = config.effective_seeds(p);
    if p < n_seeds {
        return Err(SimulationError::TooFewRelevant {
            needed: n_seeds,
            found: p,
        });
    }
    if p == gold.len() {
        return Err(SimulationError::NoIrrelevant);
    }
    let bits: Option<Vec<Option<u8>>> = llm_votes.map(|m| ids.iter().map(|id| m.get(id).copied()).collect());

    // The reranker embeds every record once; the oracle and random modes
    // never call it but share the construction for a uniform manifest.
    let reranker = Reranker::new(embedder, records)?;
    let seeds = run_seeds(config.rng_seed, config.n_runs);

    let outcomes: Result<Vec<RunOutcome>, SimulationError> = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &run_seed)| {
            let (trajectory, seed_ids, reranks) =
                simulate_run(&reranker, &ids, &gold, config, run_seed, bits.as_deref())?;
            let metrics = compute_metrics(&trajectory)?;
            Ok(RunOutcome {
                run: run + 1,
                run_seed,
                seed_ids,
                trajectory,
                metrics,
                reranks,
            })
        })
        .collect();
    let runs = outcomes?;
    let per_run: Vec<RunMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
    let report = aggregate_runs(&per_run, config.sd_kind)?;
    let llm_active = config.ensemble.llm_enabled && bits.is_some();

    let manifest = RunManifest {
        n_records: records.len(),
        n_relevant: p,
        n_runs: config.n_runs,
        n_seeds_requested: config.n_seeds,
        n_seeds_effective: n_seeds,
        small_p_threshold: SMALL_P_THRESHOLD,
        batch_size: config.batch_size,
        rng_seed: config.rng_seed,
        run_seeds: seeds,
        ranker: config.ranker,
        seeds_free: config.seeds_free,
        sgd_period: config.ensemble.sgd_period,
        max_seeds: config.ensemble.max_seeds,
        neg_ratio: config.ensemble.neg_ratio,
        llm_enabled: config.ensemble.llm_enabled,
        llm_votes_supplied: bits.is_some(),
        combine_rule: if llm_active { "base + bit".into() } else { "base".into() },
        score_range: if llm_active { (0.0, 2.0) } else { (0.0, 1.0) },
        embedder: reranker.embedder_name().to_string(),
        sd_kind: config.sd_kind,
        reranks: runs.iter().map(|r| r.reranks.clone()).collect(),
    };
    Ok(SimulationResult { manifest, runs, report })
}
