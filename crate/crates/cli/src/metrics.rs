use std::io::Write;

use horizon_core::eval::{compute_metrics, tnr_at_r, wss_at_r, MetricError, RunMetrics, Trajectory};
use serde::Serialize;

use crate::{read_input, CliError, CliResult, MetricsArgs};

/// Output of `horizon metrics`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsOutput {
    pub n: usize,
    pub p: usize,
    pub r: f64,
    pub wss: f64,
    /// `None` when the order has no irrelevant records.
    pub tnr: Option<f64>,
    pub metrics: RunMetrics,
}

fn parse_flag(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "include" | "relevant" => Some(true),
        "0" | "false" | "no" | "exclude" | "irrelevant" => Some(false),
        _ => None,
    }
}

/// Read a screening order: a CSV with a `relevant` or `label` column and an
/// optional `record_id` or `id` column. Rows are in screening order.
pub fn parse_trajectory(bytes: &[u8]) -> Result<Trajectory, String> {
    let body = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let find = |names: &[&str]| header.iter().position(|h| names.contains(&h.as_str()));
    let rel_col = find(&["relevant", "label"]).ok_or("no \"relevant\" or \"label\" column")?;
    let id_col = find(&["record_id", "id"]);

    let mut items = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let line = i + 2;
        let cell = row.get(rel_col).unwrap_or("");
        let rel =
            parse_flag(cell).ok_or_else(|| format!("line {line}: cannot read {cell:?} as relevant/irrelevant"))?;
        let id = match id_col {
            Some(c) => row.get(c).unwrap_or("").to_string(),
            None => (i + 1).to_string(),
        };
        items.push((id, rel));
    }
    if items.is_empty() {
        return Err("trajectory has no rows".into());
    }
    Ok(Trajectory::new(items))
}

pub fn compute(trajectory: &Trajectory, r: f64) -> Result<MetricsOutput, MetricError> {
    let wss = wss_at_r(trajectory, r)?;
    let tnr = match tnr_at_r(trajectory, r) {
        Ok(t) => Some(t),
        Err(MetricError::NoNegatives) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsOutput {
        n: trajectory.n(),
        p: trajectory.p(),
        r,
        wss,
        tnr,
        metrics: compute_metrics(trajectory)?,
    })
}

pub fn run(args: &MetricsArgs, stdout: &mut dyn Write) -> CliResult {
    let trajectory = parse_trajectory(&read_input(&args.trajectory)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.trajectory.display())))?;
    let out = compute(&trajectory, args.r).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut json = serde_json::to_vec_pretty(&out).expect("serialisable");
    json.push(b'\n');
    stdout.write_all(&json).map_err(|e| CliError::Runtime(e.to_string()))
}
