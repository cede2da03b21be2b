use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use horizon_core::retrieval::{
    export_articles_csv, export_articles_ris, export_search_doc, parse_query_file, run_scan, Clock, FixtureTransport,
    HttpTransport, LiveConfig, ScanParams, ScanProgress, ScanResult, SearchDocEntry, SystemClock, Timeframe, Transport,
    VirtualClock,
};

use crate::{read_input, write_output, CliError, CliResult, ScanArgs};

pub const SEARCH_DOC_FILE: &str = "search_documentation.csv";
pub const ARTICLES_CSV_FILE: &str = "articles.csv";
pub const ARTICLES_RIS_FILE: &str = "articles.ris";

fn parse_date(flag: &str, value: Option<&str>) -> CliResult<Option<NaiveDate>> {
    value
        .map(|v| {
            NaiveDate::parse_from_str(v, "%Y-%m-%d")
                .map_err(|e| CliError::Usage(format!("--{flag} {v:?}: {e} (expected YYYY-MM-DD)")))
        })
        .transpose()
}

pub fn params_from_args(args: &ScanArgs) -> CliResult<ScanParams> {
    let start = parse_date("from", args.from.as_deref())?;
    let end = parse_date("to", args.to.as_deref())?;
    let params = ScanParams {
        timeframe: (start.is_some() || end.is_some()).then_some(Timeframe { start, end }),
        max_per_query: args.max_per_query,
        scrape_fulltext: args.scrape,
        decode_redirects: !args.no_decode_redirects,
        ..ScanParams::default()
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(params)
}

/// Write the three export files into `dir`.
pub fn write_exports(result: &ScanResult, dir: &Path) -> CliResult {
    write_output(&dir.join(SEARCH_DOC_FILE), &export_search_doc(&result.search_doc))?;
    write_output(&dir.join(ARTICLES_CSV_FILE), &export_articles_csv(&result.articles))?;
    write_output(&dir.join(ARTICLES_RIS_FILE), &export_articles_ris(&result.articles))
}

/// Fixed-width rendering of the search documentation.
pub fn search_doc_table(entries: &[SearchDocEntry]) -> String {
    let width = entries
        .iter()
        .map(|e| e.query.chars().count())
        .max()
        .unwrap_or(0)
        .max(5);
    let mut out = format!(
        "{:<width$}  {:>10}  {:>9}  {:>10}\n",
        "query", "reported", "retrieved", "new unique"
    );
    for e in entries {
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>9}  {:>10}\n",
            e.query, e.n_results_reported, e.n_retrieved, e.n_new_unique
        ));
    }
    out
}

pub fn run(args: &ScanArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let queries = parse_query_file(&read_input(&args.queries)?).map_err(|e| CliError::Usage(e.to_string()))?;
    let params = params_from_args(args)?;
    let (transport, clock): (Box<dyn Transport>, Box<dyn Clock>) = match &args.fixtures {
        Some(dir) => (
            Box::new(FixtureTransport::from_dir(dir).map_err(|e| CliError::Usage(e.to_string()))?),
            Box::new(VirtualClock::new()),
        ),
        None => (
            Box::new(HttpTransport::new(LiveConfig::from_env())),
            Box::new(SystemClock::default()),
        ),
    };

    let mut on_progress = |event: ScanProgress| {
        let line = match event {
            ScanProgress::QueryDone {
                index,
                total,
                query,
                n_retrieved,
            } => format!("[{}/{total}] {query}: {n_retrieved} results", index + 1),
            ScanProgress::QueryFailed {
                index,
                total,
                query,
                error,
            } => format!("[{}/{total}] {query}: failed: {error}", index + 1),
            ScanProgress::ArticleScraped { index, total } if (index + 1) % 25 == 0 || index + 1 == total => {
                format!("scraped {}/{total}", index + 1)
            }
            ScanProgress::ArticleScraped { .. } => return,
        };
        let _ = writeln!(stderr, "{line}");
    };
    let result = run_scan(&queries, &params, clock.as_ref(), transport.as_ref(), &mut on_progress)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    write_exports(&result, &args.out)?;
    for w in &result.warnings {
        let _ = writeln!(stderr, "warning: {}: {}", w.subject, w.message);
    }
    write!(stdout, "{}", search_doc_table(&result.search_doc)).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(
        stdout,
        "{} unique articles written to {}",
        result.articles.len(),
        args.out.display()
    )
    .map_err(|e| CliError::Runtime(e.to_string()))
}
