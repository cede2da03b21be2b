//! Domain types shared by the screening side of the toolkit.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::ranking::{RankingState, RankingSummary};

/// Default cap on the reference text fed to the AI, in Unicode scalar values.
pub const DEFAULT_TRUNCATE_TO: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    #[default]
    Unlabeled,
    Include,
    Exclude,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Unlabeled => "unlabeled",
            Label::Include => "include",
            Label::Exclude => "exclude",
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "unlabeled" => Ok(Label::Unlabeled),
            "include" => Ok(Label::Include),
            "exclude" => Ok(Label::Exclude),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Human,
    GoldImport,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Human => "human",
            LabelSource::GoldImport => "gold_import",
        }
    }
}

impl FromStr for LabelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "human" => Ok(LabelSource::Human),
            "gold_import" => Ok(LabelSource::GoldImport),
            other => Err(format!("unknown label source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    News,
    TrialRegistry,
    FundingCall,
    JournalArticle,
    #[default]
    Other,
}

/// One filtration unit: a row of the uploaded spreadsheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordItem {
    pub id: String,
    pub title: String,
    /// Text the rankers see, truncated at import.
    pub reference_text: String,
    pub source_kind: SourceKind,
    /// Every original column, in header order.
    pub metadata: IndexMap<String, String>,
    pub label: Label,
    /// `None` while the record is unlabeled.
    pub label_source: Option<LabelSource>,
    pub llm_bit: Option<u8>,
    pub current_score: Option<f64>,
}

impl RecordItem {
    /// Text handed to embedders and classifiers: title, a space, then the
    /// reference text. Either part may be empty.
    pub fn model_text(&self) -> String {
        match (self.title.trim().is_empty(), self.reference_text.trim().is_empty()) {
            (true, _) => self.reference_text.clone(),
            (false, true) => self.title.clone(),
            (false, false) => format!("{} {}", self.title, self.reference_text),
        }
    }
}

/// Append-only audit entry for one labelling action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub record_id: String,
    pub new_label: Label,
    pub timestamp: DateTime<Utc>,
    pub rerank_iteration_at_time: u32,
}

/// How spreadsheet columns map onto record fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub text_column: String,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub positive_value: Option<String>,
    /// Column holding titles; when absent a header named `title` (any case)
    /// is used if present.
    #[serde(default)]
    pub title_column: Option<String>,
    /// Column holding unique record ids; row positions are used otherwise.
    #[serde(default)]
    pub id_column: Option<String>,
    #[serde(default = "default_truncate")]
    pub truncate_to: Option<usize>,
    #[serde(default)]
    pub source_kind: SourceKind,
}

fn default_truncate() -> Option<usize> {
    Some(DEFAULT_TRUNCATE_TO)
}

impl ColumnMapping {
    pub fn new(text_column: impl Into<String>) -> Self {
        Self {
            text_column: text_column.into(),
            label_column: None,
            positive_value: None,
            title_column: None,
            id_column: None,
            truncate_to: Some(DEFAULT_TRUNCATE_TO),
            source_kind: SourceKind::Other,
        }
    }

    pub fn with_label(mut self, column: impl Into<String>, positive: impl Into<String>) -> Self {
        self.label_column = Some(column.into());
        self.positive_value = Some(positive.into());
        self
    }

    pub fn with_title(mut self, column: impl Into<String>) -> Self {
        self.title_column = Some(column.into());
        self
    }

    pub fn with_id(mut self, column: impl Into<String>) -> Self {
        self.id_column = Some(column.into());
        self
    }

    pub fn with_truncate(mut self, chars: Option<usize>) -> Self {
        self.truncate_to = chars;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("unknown record id {0:?}")]
    UnknownRecord(String),
}

/// A screening project: the imported records plus everything the human and
/// the rankers have done to them since.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub mapping: ColumnMapping,
    /// Original header, in order. Every record's metadata uses these keys.
    pub columns: Vec<String>,
    pub records: Vec<RecordItem>,
    pub label_events: Vec<LabelEvent>,
    pub ranking_history: Vec<RankingSummary>,
    pub current_ranking: Option<RankingState>,
}

impl Project {
    pub fn label_column_name(&self) -> Option<&str> {
        self.mapping.label_column.as_deref()
    }

    pub fn text_column_name(&self) -> &str {
        &self.mapping.text_column
    }

    pub fn label_positive_value(&self) -> Option<&str> {
        self.mapping.positive_value.as_deref()
    }

    /// Number of reranks performed so far.
    pub fn iteration(&self) -> u32 {
        self.ranking_history.len() as u32
    }

    pub fn position_of(&self, record_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == record_id)
    }

    pub fn record(&self, record_id: &str) -> Option<&RecordItem> {
        self.records.iter().find(|r| r.id == record_id)
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Set a label and append the matching event. Setting `Unlabeled`
    /// un-screens the record.
    pub fn apply_label(&mut self, record_id: &str, new_label: Label) -> Result<(), LabelError> {
        self.apply_label_at(record_id, new_label, Utc::now())
    }

    pub fn apply_label_at(
        &mut self,
        record_id: &str,
        new_label: Label,
        timestamp: DateTime<Utc>,
    ) -> Result<(), LabelError> {
        let iteration = self.iteration();
        let record = self
            .records
            .iter_mut()
            .find(|r| r.id == record_id)
            .ok_or_else(|| LabelError::UnknownRecord(record_id.to_string()))?;
        record.label = new_label;
        record.label_source = new_label.is_labeled().then_some(LabelSource::Human);
        self.label_events.push(LabelEvent {
            record_id: record_id.to_string(),
            new_label,
            timestamp,
            rerank_iteration_at_time: iteration,
        });
        Ok(())
    }

    /// Positions of labeled records in the order a human saw them: labels
    /// carried in by the import first (in row order), then records labeled
    /// through events, ordered by the event that last set their current
    /// label.
    pub fn viewed_order(&self) -> Vec<usize> {
        let index: HashMap<&str, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let mut last_event: Vec<Option<usize>> = vec![None; self.records.len()];
        for (seq, event) in self.label_events.iter().enumerate() {
            if let Some(&pos) = index.get(event.record_id.as_str()) {
                last_event[pos] = Some(seq);
            }
        }
        let mut viewed: Vec<usize> = (0..self.records.len())
            .filter(|&i| self.records[i].label.is_labeled())
            .collect();
        // `None` sorts before every `Some`, which puts imported labels first.
        viewed.sort_by_key(|&i| (last_event[i], i));
        viewed
    }

    /// Row order used for export: viewed records first, then the unlabeled
    /// pool in the latest ranked order, then any unranked leftovers in import
    /// order.
    pub fn export_order(&self) -> Vec<usize> {
        let mut order = self.viewed_order();
        let mut placed = vec![false; self.records.len()];
        for &i in &order {
            placed[i] = true;
        }
        if let Some(ranking) = &self.current_ranking {
            let index: HashMap<&str, usize> = self
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.id.as_str(), i))
                .collect();
            for id in &ranking.ordering {
                if let Some(&i) = index.get(id.as_str()) {
                    if !placed[i] {
                        placed[i] = true;
                        order.push(i);
                    }
                }
            }
        }
        order.extend((0..self.records.len()).filter(|&i| !placed[i]));
        order
    }

    /// The current unlabeled pool, best first.
    pub fn queue(&self, limit: Option<usize>) -> Vec<&RecordItem> {
        let viewed = self.viewed_order().len();
        let order = self.export_order();
        let it = order[viewed..].iter().map(|&i| &self.records[i]);
        match limit {
            Some(n) => it.take(n).collect(),
            None => it.collect(),
        }
    }
}

/// Rebuild the label map by replaying `events` over a freshly imported
/// project.
pub fn replay_labels(imported: &Project, events: &[LabelEvent]) -> Result<Vec<Label>, LabelError> {
    let index: HashMap<&str, usize> = imported
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let mut labels = imported.labels();
    for event in events {
        let pos = index
            .get(event.record_id.as_str())
            .ok_or_else(|| LabelError::UnknownRecord(event.record_id.clone()))?;
        labels[*pos] = event.new_label;
    }
    Ok(labels)
}
