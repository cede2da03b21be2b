//! Spreadsheet and bibliographic interchange.
//!
//! CSV follows RFC 4180 (UTF-8, header row, CRLF line endings). Exported
//! project spreadsheets carry a small set of reserved `hs_*` columns after
//! the original ones so that a re-import restores record ids, labels, scores
//! and LLM votes. Cell text is written verbatim: nothing is escaped against
//! spreadsheet formula injection.

mod csv;
mod project_file;
mod ris;

pub use self::csv::{
    export_csv, import_csv, ImportError, COL_LABEL, COL_LABEL_SOURCE, COL_LLM_BIT, COL_RECORD_ID, COL_SCORE,
    RESERVED_COLUMNS,
};
pub use self::project_file::{load_project, save_project, sidecar_path, ProjectFileError, Sidecar, FORMAT_VERSION};
pub use self::ris::{export_ris, RisRecord};

/// Truncate to at most `limit` Unicode scalar values.
pub fn truncate_chars(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}
