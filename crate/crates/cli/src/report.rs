use std::io::Write;

use horizon_core::eval::{gain_curve_csv, project_report, project_report_json};
use horizon_core::io::load_project;

use crate::{write_output, CliError, CliResult, ReportArgs};

/// Print (or write) the report JSON; same bytes as the service's
/// `GET /projects/{id}/mini-report`.
pub fn run(args: &ReportArgs, stdout: &mut dyn Write) -> CliResult {
    let project = load_project(&args.project).map_err(|e| CliError::Usage(e.to_string()))?;
    let json = project_report_json(&project)
        .map_err(|e| CliError::Usage(format!("{}: cannot report: {e}", args.project.display())))?;
    if let Some(path) = &args.gain_curve {
        let report = project_report(&project).map_err(|e| CliError::Usage(e.to_string()))?;
        write_output(path, &gain_curve_csv(&report.report.gain_curve))?;
    }
    match &args.out {
        Some(path) => write_output(path, &json),
        None => stdout.write_all(&json).map_err(|e| CliError::Runtime(e.to_string())),
    }
}
