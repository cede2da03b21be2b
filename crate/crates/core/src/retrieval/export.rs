use super::{NewsArticle, SearchDocEntry};
use crate::io::{export_ris, RisRecord};

pub const ARTICLE_COLUMNS: [&str; 11] = [
    "rank",
    "title",
    "url",
    "resolved_url",
    "outlet",
    "published",
    "min_page_rank",
    "dup_count",
    "queries",
    "first_seen_position",
    "full_text",
];

/// Separator between the queries of one article in the CSV export.
const QUERY_SEP: &str = " | ";

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory writer")
}

/// Search documentation, one row per query in execution order.
pub fn export_search_doc(entries: &[SearchDocEntry]) -> Vec<u8> {
    let mut w = writer();
    w.write_record(["query", "n_results_reported", "n_retrieved", "n_new_unique"])
        .expect("in-memory writer");
    for e in entries {
        w.write_record([
            e.query.clone(),
            e.n_results_reported.to_string(),
            e.n_retrieved.to_string(),
            e.n_new_unique.to_string(),
        ])
        .expect("in-memory writer");
    }
    finish(w)
}

/// Ranked results in the given order; `rank` is the 1-based row number.
pub fn export_articles_csv(articles: &[NewsArticle]) -> Vec<u8> {
    let mut w = writer();
    w.write_record(ARTICLE_COLUMNS).expect("in-memory writer");
    for (i, a) in articles.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            a.title.clone(),
            a.feed_url.clone(),
            a.resolved_url.clone().unwrap_or_default(),
            a.outlet.clone(),
            a.published.map(|d| d.to_string()).unwrap_or_default(),
            a.min_page_rank.to_string(),
            a.dup_count.to_string(),
            a.queries.join(QUERY_SEP),
            a.first_seen_position.to_string(),
            a.full_text.clone().unwrap_or_default(),
        ])
        .expect("in-memory writer");
    }
    finish(w)
}

pub fn export_articles_ris(articles: &[NewsArticle]) -> Vec<u8> {
    export_ris(articles)
}

impl RisRecord for NewsArticle {
    fn ris_type(&self) -> &'static str {
        "NEWS"
    }

    fn ris_fields(&self) -> Vec<(&'static str, String)> {
        let mut f = vec![("TI", self.title.clone())];
        f.push(("UR", self.resolved_url.clone().unwrap_or_else(|| self.feed_url.clone())));
        if let Some(d) = self.published {
            f.push(("DA", d.format("%Y/%m/%d/").to_string()));
            f.push(("PY", d.format("%Y").to_string()));
        }
        if !self.outlet.is_empty() {
            f.push(("JO", self.outlet.clone()));
        }
        if let Some(text) = &self.full_text {
            f.push(("AB", text.clone()));
        }
        for q in &self.queries {
            f.push(("N1", format!("Query: {q}")));
        }
        f.push(("N1", format!("Duplicate count: {}", self.dup_count)));
        f.push(("N1", format!("Best results page: {}", self.min_page_rank)));
        f
    }
}
