use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv::{import_csv, write_rows, ImportError};
use crate::ranking::{RankingState, RankingSummary};
use crate::record::{ColumnMapping, LabelEvent, Project};

pub const FORMAT_VERSION: u32 = 1;

/// JSON stored next to the project spreadsheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub id: String,
    pub mapping: ColumnMapping,
    pub label_events: Vec<LabelEvent>,
    pub ranking_history: Vec<RankingSummary>,
    pub current_ranking: Option<RankingState>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProjectFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported sidecar format_version {0}")]
    Version(u32),
    #[error(transparent)]
    Import(#[from] ImportError),
}

/// `proj.csv` → `proj.project.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "project".into());
    csv_path.with_file_name(format!("{stem}.project.json"))
}

fn csv_path_for(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    match name.strip_suffix(".project.json") {
        Some(stem) => path.with_file_name(format!("{stem}.csv")),
        None => path.to_path_buf(),
    }
}

/// Write the records CSV (import order, scores included) and its sidecar.
pub fn save_project(project: &Project, csv_path: &Path) -> Result<(), ProjectFileError> {
    let order: Vec<usize> = (0..project.records.len()).collect();
    let rows = write_rows(project, &order, true);
    write(csv_path, &rows)?;
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        id: project.id.clone(),
        mapping: project.mapping.clone(),
        label_events: project.label_events.clone(),
        ranking_history: project.ranking_history.clone(),
        current_ranking: project.current_ranking.clone(),
    };
    let json = serde_json::to_vec_pretty(&sidecar)?;
    write(&sidecar_path(csv_path), &json)
}

/// Load a project saved by [`save_project`]. Accepts either the CSV path or
/// the sidecar path.
pub fn load_project(path: &Path) -> Result<Project, ProjectFileError> {
    let csv_path = csv_path_for(path);
    let sidecar_bytes = read(&sidecar_path(&csv_path))?;
    let sidecar: Sidecar = serde_json::from_slice(&sidecar_bytes)?;
    if sidecar.format_version != FORMAT_VERSION {
        return Err(ProjectFileError::Version(sidecar.format_version));
    }
    let mut project = import_csv(&read(&csv_path)?, &sidecar.mapping)?;
    project.id = sidecar.id;
    project.label_events = sidecar.label_events;
    project.ranking_history = sidecar.ranking_history;
    project.current_ranking = sidecar.current_ranking;
    Ok(project)
}

fn read(path: &Path) -> Result<Vec<u8>, ProjectFileError> {
    fs::read(path).map_err(|source| ProjectFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ProjectFileError> {
    fs::write(path, bytes).map_err(|source| ProjectFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Label;

    #[test]
    fn save_and_load() {
        let dir = std::env::temp_dir().join(format!("hs-project-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let csv = "Title,Abstract,Decision\nA,aa,Include\nB,bb,\nC,cc,Exclude\n";
        let mapping = ColumnMapping::new("Abstract").with_label("Decision", "Include");
        let mut p = import_csv(csv.as_bytes(), &mapping).unwrap();
        p.apply_label("r1", Label::Include).unwrap();
        let path = dir.join("scan.csv");
        save_project(&p, &path).unwrap();
        assert!(dir.join("scan.project.json").exists());
        let q = load_project(&dir.join("scan.project.json")).unwrap();
        assert_eq!(q, p);
        fs::remove_dir_all(&dir).ok();
    }
}
