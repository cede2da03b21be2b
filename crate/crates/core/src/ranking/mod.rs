//! Active-learning prioritisation.
//!
//! Each rerank scores the unlabeled pool with one of two rankers:
//!
//! * similarity: the mean cosine similarity between a record and up to
//!   `max_seeds` randomly chosen includes, mapped from `[-1, 1]` onto
//!   `[0, 1]` with `(c + 1) / 2`;
//! * a TF-IDF + SGD logistic classifier trained on all includes and at most
//!   `neg_ratio` sampled excludes per include, used on every
//!   `sgd_period`-th rerank.
//!
//! When LLM votes are enabled, each record's 0/1 vote is added to its score.
//! Ties are always broken by import position.

mod sgd;
mod tfidf;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, embed, Embedder, EmbeddingError, EmbeddingVector};
use crate::record::{Label, Project, RecordItem};

pub use sgd::{sigmoid, train_sgd, SgdClassifier, SgdParams};
pub use tfidf::{tokenize, SparseVector, TfidfVectorizer};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankingError {
    #[error("no included records to rank against")]
    NoIncludes,
    #[error("classifier needs at least one include and one exclude")]
    SingleClass,
    #[error("empty vocabulary: training text has no usable tokens")]
    EmptyVocabulary,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerKind {
    Similarity,
    Sgd,
    LlmEnsemble,
}

impl RankerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RankerKind::Similarity => "similarity",
            RankerKind::Sgd => "sgd",
            RankerKind::LlmEnsemble => "llm_ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Reranks divisible by this use the classifier; `None` disables it.
    pub sgd_period: Option<u32>,
    pub max_seeds: usize,
    pub neg_ratio: usize,
    pub llm_enabled: bool,
    #[serde(default)]
    pub sgd: SgdParams,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            sgd_period: Some(5),
            max_seeds: 10,
            neg_ratio: 3,
            llm_enabled: false,
            sgd: SgdParams::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if matches!(self.sgd_period, Some(p) if p < 2) {
            return Err("sgd_period must be at least 2".into());
        }
        if self.max_seeds < 1 {
            return Err("max_seeds must be at least 1".into());
        }
        if self.neg_ratio < 1 {
            return Err("neg_ratio must be at least 1".into());
        }
        Ok(())
    }
}

/// Outcome of one rerank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingState {
    pub iteration: u32,
    /// Unlabeled record ids, best first.
    pub ordering: Vec<String>,
    /// Base ranker score in `[0, 1]`, aligned with `ordering`.
    pub scores01: Vec<f64>,
    /// `scores01 + llm_bit`, aligned with `ordering`, when the LLM vote was
    /// applied.
    pub combined: Option<Vec<f64>>,
    pub ranker_used: RankerKind,
    /// The classifier was due but no excludes existed yet.
    pub fallback: bool,
    pub seeds_used: Vec<String>,
    /// Records whose LLM vote was missing and counted as 0.
    pub llm_pending: usize,
}

impl RankingState {
    /// Score that determined the ordering.
    pub fn final_scores(&self) -> &[f64] {
        self.combined.as_deref().unwrap_or(&self.scores01)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_includes: usize,
    pub n_excludes_available: usize,
    pub n_excludes_sampled: usize,
    pub epochs: usize,
}

/// Provenance of one rerank, kept in the project history and run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub iteration: u32,
    pub ranker_used: RankerKind,
    /// Similarity or classifier, before any LLM combination.
    pub base_ranker: RankerKind,
    pub fallback: bool,
    pub seeds_used: Vec<String>,
    /// How per-seed similarities were collapsed.
    pub aggregation: String,
    pub n_ranked: usize,
    pub training: Option<TrainingSummary>,
    pub llm_applied: bool,
    pub llm_pending: usize,
    pub min_score: Option<f64>,
    pub max_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankerChoice {
    pub kind: RankerKind,
    pub fallback: bool,
}

/// Which ranker runs at `iteration` (1-based). The classifier needs at
/// least one exclude; without one the similarity ranker runs instead and
/// `fallback` is set.
pub fn next_ranker(iteration: u32, config: &EnsembleConfig, has_excludes: bool) -> RankerChoice {
    match config.sgd_period {
        Some(p) if iteration > 0 && iteration.is_multiple_of(p) => {
            if has_excludes {
                RankerChoice {
                    kind: RankerKind::Sgd,
                    fallback: false,
                }
            } else {
                tracing::info!(iteration, "classifier due but no excludes yet; using similarity");
                RankerChoice {
                    kind: RankerKind::Similarity,
                    fallback: true,
                }
            }
        }
        _ => RankerChoice {
            kind: RankerKind::Similarity,
            fallback: false,
        },
    }
}

/// Uniform sample without replacement of `min(len, max_seeds)` items.
pub fn select_seeds<T: Clone, R: Rng + ?Sized>(
    included: &[T],
    max_seeds: usize,
    rng: &mut R,
) -> Result<Vec<T>, RankingError> {
    if included.is_empty() {
        return Err(RankingError::NoIncludes);
    }
    let n = included.len().min(max_seeds);
    Ok(rand::seq::index::sample(rng, included.len(), n)
        .into_iter()
        .map(|i| included[i].clone())
        .collect())
}

/// `(c + 1) / 2`.
pub fn to_unit_interval(cosine: f64) -> f64 {
    ((cosine + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Mean cosine similarity of each candidate to the seeds. All vectors must
/// be unit length.
pub fn mean_seed_similarity(candidates: &[&EmbeddingVector], seeds: &[&EmbeddingVector]) -> Vec<f64> {
    if seeds.is_empty() {
        return vec![0.0; candidates.len()];
    }
    let dim = seeds[0].dimension();
    let mut centroid = vec![0.0; dim];
    for s in seeds {
        for (c, v) in centroid.iter_mut().zip(s.values()) {
            *c += v;
        }
    }
    let k = seeds.len() as f64;
    centroid.iter_mut().for_each(|c| *c /= k);
    candidates
        .iter()
        .map(|c| dot(c.values(), &centroid).clamp(-1.0, 1.0))
        .collect()
}

/// Indices of `scores` sorted descending, ties by ascending index.
pub fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Add each record's LLM vote to its base score. Missing votes count as 0
/// and are reported as pending.
pub fn combine_llm(scores01: &[f64], llm_bits: &[Option<u8>]) -> (Vec<f64>, usize) {
    let mut pending = 0;
    let combined = scores01
        .iter()
        .zip(llm_bits)
        .map(|(&s, bit)| match bit {
            Some(b) => s + f64::from((*b).min(1)),
            None => {
                pending += 1;
                s
            }
        })
        .collect();
    (combined, pending)
}

#[allow(clippy::too_many_arguments)]
fn build_state(
    iteration: u32,
    ids: Vec<String>,
    scores01: Vec<f64>,
    combined: Option<Vec<f64>>,
    ranker_used: RankerKind,
    fallback: bool,
    seeds_used: Vec<String>,
    llm_pending: usize,
) -> RankingState {
    let order = order_desc(combined.as_deref().unwrap_or(&scores01));
    RankingState {
        iteration,
        ordering: order.iter().map(|&i| ids[i].clone()).collect(),
        scores01: order.iter().map(|&i| scores01[i]).collect(),
        combined: combined.map(|c| order.iter().map(|&i| c[i]).collect()),
        ranker_used,
        fallback,
        seeds_used,
        llm_pending,
    }
}

/// Rank `unlabeled` (given in import order) by mean similarity to `seeds`.
pub fn rank_by_similarity<E: Embedder + ?Sized>(
    unlabeled: &[&RecordItem],
    seeds: &[&RecordItem],
    embedder: &E,
) -> Result<RankingState, RankingError> {
    if seeds.is_empty() {
        return Err(RankingError::NoIncludes);
    }
    let seed_texts: Vec<String> = seeds.iter().map(|r| r.model_text()).collect();
    let seed_refs: Vec<&str> = seed_texts.iter().map(String::as_str).collect();
    let seed_vecs = embed(embedder, &seed_refs)?;
    let scores01 = if unlabeled.is_empty() {
        Vec::new()
    } else {
        let texts: Vec<String> = unlabeled.iter().map(|r| r.model_text()).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let vecs = embed(embedder, &refs)?;
        let cands: Vec<&EmbeddingVector> = vecs.iter().collect();
        let seeds: Vec<&EmbeddingVector> = seed_vecs.iter().collect();
        mean_seed_similarity(&cands, &seeds)
            .into_iter()
            .map(to_unit_interval)
            .collect()
    };
    Ok(build_state(
        1,
        unlabeled.iter().map(|r| r.id.clone()).collect(),
        scores01,
        None,
        RankerKind::Similarity,
        false,
        seeds.iter().map(|r| r.id.clone()).collect(),
        0,
    ))
}

/// Rank `unlabeled` (given in import order) by classifier probability.
pub fn rank_by_classifier(unlabeled: &[&RecordItem], classifier: &SgdClassifier) -> RankingState {
    let scores01 = unlabeled
        .iter()
        .map(|r| classifier.predict_proba(&tokenize(&r.model_text())))
        .collect();
    build_state(
        1,
        unlabeled.iter().map(|r| r.id.clone()).collect(),
        scores01,
        None,
        RankerKind::Sgd,
        false,
        Vec::new(),
        0,
    )
}

/// Cached per-record features for repeated reranks over one record set.
///
/// Records whose title and reference text are both blank cannot be embedded;
/// they score 0 and sink to the bottom of every ordering.
pub struct Reranker {
    ids: Vec<String>,
    vectors: Vec<Option<EmbeddingVector>>,
    tokens: Vec<Vec<String>>,
    embedder_name: String,
}

impl Reranker {
    pub fn new<E: Embedder + ?Sized>(embedder: &E, records: &[RecordItem]) -> Result<Self, RankingError> {
        let texts: Vec<String> = records.iter().map(RecordItem::model_text).collect();
        let present: Vec<usize> = (0..texts.len()).filter(|&i| !texts[i].trim().is_empty()).collect();
        if present.len() < texts.len() {
            tracing::warn!(
                blank = texts.len() - present.len(),
                "records without text are ranked last"
            );
        }
        let mut vectors = vec![None; texts.len()];
        if !present.is_empty() {
            let refs: Vec<&str> = present.iter().map(|&i| texts[i].as_str()).collect();
            for (i, v) in present.iter().zip(embed(embedder, &refs)?) {
                vectors[*i] = Some(v);
            }
        }
        Ok(Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            tokens: texts.iter().map(|t| tokenize(t)).collect(),
            vectors,
            embedder_name: embedder.name().to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn embedder_name(&self) -> &str {
        &self.embedder_name
    }

    /// Rerank the unlabeled positions of `labels` (aligned with the records
    /// this reranker was built from).
    pub fn rerank<R: Rng + ?Sized>(
        &self,
        labels: &[Label],
        iteration: u32,
        config: &EnsembleConfig,
        rng: &mut R,
        llm_bits: Option<&[Option<u8>]>,
    ) -> Result<(RankingState, RankingSummary), RankingError> {
        assert_eq!(labels.len(), self.ids.len(), "labels must align with records");
        let includes: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Include).collect();
        let excludes: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Exclude).collect();
        let pool: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Unlabeled).collect();
        if includes.is_empty() {
            return Err(RankingError::NoIncludes);
        }

        let choice = next_ranker(iteration, config, !excludes.is_empty());
        let mut seeds_used = Vec::new();
        let mut training = None;
        let scores01: Vec<f64> = match choice.kind {
            RankerKind::Sgd => {
                let inc: Vec<&[String]> = includes.iter().map(|&i| self.tokens[i].as_slice()).collect();
                let exc: Vec<&[String]> = excludes.iter().map(|&i| self.tokens[i].as_slice()).collect();
                let clf = train_sgd(&inc, &exc, config.neg_ratio, rng, &config.sgd)?;
                training = Some(TrainingSummary {
                    n_includes: clf.n_includes,
                    n_excludes_available: excludes.len(),
                    n_excludes_sampled: clf.n_excludes,
                    epochs: clf.epochs,
                });
                pool.iter()
                    .map(|&i| {
                        if self.vectors[i].is_none() {
                            0.0
                        } else {
                            clf.predict_proba(&self.tokens[i])
                        }
                    })
                    .collect()
            }
            _ => {
                let seeds = select_seeds(&includes, config.max_seeds, rng)?;
                seeds_used = seeds.iter().map(|&i| self.ids[i].clone()).collect();
                let seed_vecs: Vec<&EmbeddingVector> = seeds.iter().filter_map(|&i| self.vectors[i].as_ref()).collect();
                let cands: Vec<&EmbeddingVector> = pool.iter().filter_map(|&i| self.vectors[i].as_ref()).collect();
                let mut sims = mean_seed_similarity(&cands, &seed_vecs).into_iter();
                pool.iter()
                    .map(|&i| match self.vectors[i] {
                        Some(_) => to_unit_interval(sims.next().expect("one score per candidate")),
                        None => 0.0,
                    })
                    .collect()
            }
        };

        let (combined, pending) = match (config.llm_enabled, llm_bits) {
            (true, Some(bits)) => {
                let pool_bits: Vec<Option<u8>> = pool.iter().map(|&i| bits[i]).collect();
                let (c, p) = combine_llm(&scores01, &pool_bits);
                (Some(c), p)
            }
            _ => (None, 0),
        };
        let ranker_used = if combined.is_some() {
            RankerKind::LlmEnsemble
        } else {
            choice.kind
        };
        let state = build_state(
            iteration,
            pool.iter().map(|&i| self.ids[i].clone()).collect(),
            scores01,
            combined,
            ranker_used,
            choice.fallback,
            seeds_used,
            pending,
        );
        let finals = state.final_scores();
        let summary = RankingSummary {
            iteration,
            ranker_used,
            base_ranker: choice.kind,
            fallback: choice.fallback,
            seeds_used: state.seeds_used.clone(),
            aggregation: "mean".into(),
            n_ranked: state.ordering.len(),
            training,
            llm_applied: state.combined.is_some(),
            llm_pending: pending,
            min_score: finals.iter().copied().reduce(f64::min),
            max_score: finals.iter().copied().reduce(f64::max),
        };
        Ok((state, summary))
    }

    /// Rerank a live project in place: bumps the iteration, stores the new
    /// state and its summary, and writes the scores onto the records.
    pub fn rerank_project<R: Rng + ?Sized>(
        &self,
        project: &mut Project,
        config: &EnsembleConfig,
        rng: &mut R,
        llm_bits: Option<&HashMap<String, u8>>,
    ) -> Result<RankingState, RankingError> {
        assert_eq!(
            project.records.len(),
            self.ids.len(),
            "reranker built for another record set"
        );
        let labels = project.labels();
        let bits: Option<Vec<Option<u8>>> = llm_bits
            .map(|m| project.records.iter().map(|r| m.get(&r.id).copied()).collect())
            .or_else(|| {
                config
                    .llm_enabled
                    .then(|| project.records.iter().map(|r| r.llm_bit).collect())
            });
        let iteration = project.iteration() + 1;
        let (state, summary) = self.rerank(&labels, iteration, config, rng, bits.as_deref())?;

        let score_of: HashMap<&str, f64> = state
            .ordering
            .iter()
            .map(String::as_str)
            .zip(state.final_scores().iter().copied())
            .collect();
        for record in &mut project.records {
            if let Some(&s) = score_of.get(record.id.as_str()) {
                record.current_score = Some(s);
            }
        }
        if let Some(m) = llm_bits {
            for record in &mut project.records {
                if let Some(&b) = m.get(&record.id) {
                    record.llm_bit = Some(b);
                }
            }
        }
        project.ranking_history.push(summary);
        project.current_ranking = Some(state.clone());
        Ok(state)
    }
}

/// One-shot rerank of a project: embeds every record, then delegates to
/// [`Reranker::rerank_project`].
pub fn rerank<E: Embedder + ?Sized, R: Rng + ?Sized>(
    project: &mut Project,
    config: &EnsembleConfig,
    rng: &mut R,
    embedder: &E,
    llm_bits: Option<&HashMap<String, u8>>,
) -> Result<RankingState, RankingError> {
    Reranker::new(embedder, &project.records)?.rerank_project(project, config, rng, llm_bits)
}
