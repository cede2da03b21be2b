use std::collections::HashSet;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use super::truncate_chars;
use crate::record::{ColumnMapping, Label, LabelSource, Project, RecordItem};

pub const COL_RECORD_ID: &str = "hs_record_id";
pub const COL_LABEL: &str = "hs_label";
pub const COL_LABEL_SOURCE: &str = "hs_label_source";
pub const COL_SCORE: &str = "hs_score";
pub const COL_LLM_BIT: &str = "hs_llm_bit";

/// Columns appended by [`export_csv`]; stripped from metadata on import.
pub const RESERVED_COLUMNS: [&str; 5] = [COL_RECORD_ID, COL_LABEL, COL_LABEL_SOURCE, COL_SCORE, COL_LLM_BIT];

#[derive(Debug, thiserror::Error)]
pub enum ImportError {
    #[error("empty dataset")]
    Empty,
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("duplicate header name {0:?}")]
    DuplicateHeader(String),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("row {row}: invalid value {value:?} in column {column:?}")]
    InvalidCell { row: usize, column: String, value: String },
    #[error("malformed CSV: {0}")]
    Csv(#[from] ::csv::Error),
}

impl ImportError {
    /// The column a mapping error refers to, if any.
    pub fn column(&self) -> Option<&str> {
        match self {
            ImportError::MissingColumn(c) | ImportError::DuplicateHeader(c) => Some(c),
            ImportError::InvalidCell { column, .. } => Some(column),
            _ => None,
        }
    }
}

fn header_index(header: &[String], name: &str) -> Result<usize, ImportError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| ImportError::MissingColumn(name.to_string()))
}

/// Parse a CSV upload into a project. See [`ColumnMapping`] for how columns
/// become record fields.
pub fn import_csv(bytes: &[u8], mapping: &ColumnMapping) -> Result<Project, ImportError> {
    let body = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    if body.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(ImportError::Empty);
    }
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(body);

    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(ImportError::DuplicateHeader(h.clone()));
        }
    }

    let reserved_idx = |name: &str| header.iter().position(|h| h == name);
    let id_col = reserved_idx(COL_RECORD_ID);
    let label_col_reserved = reserved_idx(COL_LABEL);
    let source_col = reserved_idx(COL_LABEL_SOURCE);
    let score_col = reserved_idx(COL_SCORE);
    let llm_col = reserved_idx(COL_LLM_BIT);
    let columns: Vec<String> = header
        .iter()
        .filter(|h| !RESERVED_COLUMNS.contains(&h.as_str()))
        .cloned()
        .collect();

    let text_idx = header_index(&header, &mapping.text_column)?;
    let label_idx = mapping
        .label_column
        .as_deref()
        .map(|c| header_index(&header, c))
        .transpose()?;
    let title_idx = match &mapping.title_column {
        Some(c) => Some(header_index(&header, c)?),
        None => header.iter().position(|h| h.eq_ignore_ascii_case("title")),
    };
    let user_id_idx = mapping
        .id_column
        .as_deref()
        .map(|c| header_index(&header, c))
        .transpose()?;
    let positive = mapping.positive_value.as_deref().map(str::trim);

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (row, result) in reader.records().enumerate() {
        let row_record = result?;
        let cell = |i: usize| row_record.get(i).unwrap_or("");

        let id = match (id_col, user_id_idx) {
            (Some(i), _) if !cell(i).is_empty() => cell(i).to_string(),
            (_, Some(i)) => cell(i).to_string(),
            _ => format!("r{row}"),
        };
        if !ids.insert(id.clone()) {
            return Err(ImportError::DuplicateId(id));
        }

        let raw_text = cell(text_idx);
        let reference_text = match mapping.truncate_to {
            Some(limit) => truncate_chars(raw_text, limit).to_string(),
            None => raw_text.to_string(),
        };

        let (mut label, mut label_source) = match label_idx {
            Some(i) => {
                let value = cell(i).trim();
                if value.is_empty() {
                    (Label::Unlabeled, None)
                } else if Some(value) == positive {
                    (Label::Include, Some(LabelSource::GoldImport))
                } else {
                    (Label::Exclude, Some(LabelSource::GoldImport))
                }
            }
            None => (Label::Unlabeled, None),
        };
        if let Some(i) = label_col_reserved {
            label = cell(i).parse().map_err(|_| invalid(row, COL_LABEL, cell(i)))?;
            label_source = match source_col.map(cell).filter(|s| !s.is_empty()) {
                Some(s) => Some(s.parse().map_err(|_| invalid(row, COL_LABEL_SOURCE, s))?),
                None => label.is_labeled().then_some(LabelSource::Human),
            };
            if !label.is_labeled() {
                label_source = None;
            }
        }

        let current_score = match score_col.map(cell).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<f64>().map_err(|_| invalid(row, COL_SCORE, s))?),
            None => None,
        };
        let llm_bit = match llm_col.map(cell).filter(|s| !s.is_empty()) {
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some(s) => return Err(invalid(row, COL_LLM_BIT, s)),
            None => None,
        };

        let metadata: IndexMap<String, String> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| !RESERVED_COLUMNS.contains(&h.as_str()))
            .map(|(i, h)| (h.clone(), cell(i).to_string()))
            .collect();

        records.push(RecordItem {
            id,
            title: title_idx.map(|i| cell(i).to_string()).unwrap_or_default(),
            reference_text,
            source_kind: mapping.source_kind,
            metadata,
            label,
            label_source,
            llm_bit,
            current_score,
        });
    }
    if records.is_empty() {
        return Err(ImportError::Empty);
    }

    let digest = Sha256::digest(bytes);
    Ok(Project {
        id: hex::encode(&digest[..8]),
        mapping: mapping.clone(),
        columns,
        records,
        label_events: Vec::new(),
        ranking_history: Vec::new(),
        current_ranking: None,
    })
}

fn invalid(row: usize, column: &str, value: &str) -> ImportError {
    ImportError::InvalidCell {
        row,
        column: column.to_string(),
        value: value.to_string(),
    }
}

/// Write the project in its current ranked order (see
/// [`Project::export_order`]).
pub fn export_csv(project: &Project, include_scores: bool) -> Vec<u8> {
    write_rows(project, &project.export_order(), include_scores)
}

pub(crate) fn write_rows(project: &Project, order: &[usize], include_scores: bool) -> Vec<u8> {
    let with_llm = project.records.iter().any(|r| r.llm_bit.is_some());
    let mut writer = ::csv::WriterBuilder::new()
        .terminator(::csv::Terminator::CRLF)
        .from_writer(Vec::new());

    let mut header: Vec<&str> = project.columns.iter().map(String::as_str).collect();
    header.extend([COL_RECORD_ID, COL_LABEL, COL_LABEL_SOURCE]);
    if include_scores {
        header.push(COL_SCORE);
    }
    if with_llm {
        header.push(COL_LLM_BIT);
    }
    writer.write_record(&header).expect("write to Vec");

    for &i in order {
        let record = &project.records[i];
        let mut row: Vec<String> = project
            .columns
            .iter()
            .map(|c| record.metadata.get(c).cloned().unwrap_or_default())
            .collect();
        row.push(record.id.clone());
        row.push(record.label.as_str().to_string());
        row.push(record.label_source.map(|s| s.as_str().to_string()).unwrap_or_default());
        if include_scores {
            row.push(record.current_score.map(|s| s.to_string()).unwrap_or_default());
        }
        if with_llm {
            row.push(record.llm_bit.map(|b| b.to_string()).unwrap_or_default());
        }
        writer.write_record(&row).expect("write to Vec");
    }
    writer.into_inner().expect("flush to Vec")
}
