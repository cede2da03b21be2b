//! Horizon-scanning acceleration toolkit.
//!
//! Two halves share this crate:
//!
//! * [`retrieval`] bulk-retrieves news search results from an RSS search
//!   endpoint, merges duplicates across queries, optionally scrapes full
//!   texts and ranks the unique articles by best result page and duplicate
//!   count.
//! * [`ranking`] prioritises any tabular reference set for human screening
//!   through an active-learning loop (embedding similarity to relevant seeds,
//!   a periodic TF-IDF/SGD classifier, and an optional additive LLM vote),
//!   while [`eval`] replays that loop on gold-labelled data and computes
//!   WSS@r, TNR@r, recall at screening cut-offs, average precision and gain
//!   curves.
//!
//! [`io`] holds CSV/RIS import and export plus project persistence, and
//! [`llm`] builds structured screening prompts and parses YES/NO verdicts.

pub mod embedding;
pub mod eval;
pub mod io;
pub mod llm;
pub mod ranking;
pub mod record;
pub mod retrieval;

pub use record::{Label, LabelEvent, LabelSource, Project, RecordItem, SourceKind};
