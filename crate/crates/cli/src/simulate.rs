use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use horizon_core::embedding::HashingEmbedder;
use horizon_core::eval::{
    gain_curve, gain_curve_csv, report_text, runs_csv, simulate, SdKind, SimRanker, SimulationConfig, SimulationResult,
    Trajectory, DEFAULT_SEEDS, SMALL_P_THRESHOLD,
};
use horizon_core::io::import_csv;
use horizon_core::llm::JudgementSet;
use horizon_core::ranking::EnsembleConfig;
use horizon_core::record::ColumnMapping;
use horizon_core::{Label, RecordItem};

use crate::{read_input, write_output, CliError, CliResult, RankerArg, SdArg, SimulateArgs};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_FILE: &str = "runs.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const GAIN_CURVE_DIR: &str = "gain_curves";
pub const TRAJECTORY_DIR: &str = "trajectories";

pub fn load_dataset(args: &SimulateArgs) -> CliResult<Vec<RecordItem>> {
    let mut mapping = ColumnMapping::new(&args.text_col)
        .with_label(&args.label_col, &args.positive)
        .with_truncate((args.truncate > 0).then_some(args.truncate));
    mapping.title_column = args.title_col.clone();
    mapping.id_column = args.id_col.clone();
    let project = import_csv(&read_input(&args.dataset)?, &mapping)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.dataset.display())))?;
    Ok(project.records)
}

pub fn config_from_args(args: &SimulateArgs) -> CliResult<SimulationConfig> {
    let n_seeds = match args.seeds.trim() {
        "auto" => DEFAULT_SEEDS,
        s => s
            .parse()
            .map_err(|_| CliError::Usage(format!("--seeds must be a number or \"auto\", got {s:?}")))?,
    };
    let config = SimulationConfig {
        n_runs: args.runs,
        n_seeds,
        batch_size: args.batch,
        rng_seed: args.rng,
        ensemble: EnsembleConfig {
            sgd_period: (args.sgd_period > 0).then_some(args.sgd_period),
            llm_enabled: args.llm_judgements.is_some(),
            ..EnsembleConfig::default()
        },
        ranker: match args.ranker {
            RankerArg::Engine => SimRanker::Engine,
            RankerArg::Oracle => SimRanker::Oracle,
            RankerArg::Random => SimRanker::Random,
        },
        seeds_free: args.seeds_free,
        sd_kind: match args.sd {
            SdArg::Population => SdKind::Population,
            SdArg::Sample => SdKind::Sample,
        },
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn load_votes(path: &Path, records: &[RecordItem]) -> CliResult<HashMap<String, u8>> {
    let set = JudgementSet::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let votes = set.bits();
    let missing = records.iter().filter(|r| !votes.contains_key(&r.id)).count();
    if missing > 0 {
        return Err(CliError::Usage(format!(
            "{}: no judgement for {missing} of {} records",
            path.display(),
            records.len()
        )));
    }
    Ok(votes)
}

fn trajectory_csv(t: &Trajectory) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(["record_id", "relevant"]).expect("in-memory writer");
    for (id, rel) in t.ids.iter().zip(&t.relevant) {
        w.write_record([id.as_str(), if *rel { "1" } else { "0" }])
            .expect("in-memory writer");
    }
    w.into_inner().expect("in-memory writer")
}

fn pretty_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serialisable");
    out.push(b'\n');
    out
}

/// Write the manifest, per-run metrics, the aggregate report (JSON and
/// text), and one gain curve and trajectory per run.
pub fn write_outputs(result: &SimulationResult, dir: &Path) -> CliResult {
    write_output(&dir.join(MANIFEST_FILE), &pretty_json(&result.manifest))?;
    write_output(&dir.join(RUNS_FILE), &runs_csv(&result.report))?;
    write_output(&dir.join(REPORT_JSON_FILE), &pretty_json(&result.report))?;
    write_output(&dir.join(REPORT_TEXT_FILE), report_text(&result.report).as_bytes())?;
    for run in &result.runs {
        let seed_prefix = if result.manifest.seeds_free {
            0
        } else {
            run.seed_ids.len()
        };
        let curve = gain_curve(&run.trajectory, seed_prefix).map_err(|e| CliError::Runtime(e.to_string()))?;
        let name = format!("run_{:02}.csv", run.run);
        write_output(&dir.join(GAIN_CURVE_DIR).join(&name), &gain_curve_csv(&curve))?;
        write_output(&dir.join(TRAJECTORY_DIR).join(&name), &trajectory_csv(&run.trajectory))?;
    }
    Ok(())
}

pub fn run(args: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let records = load_dataset(args)?;
    let config = config_from_args(args)?;
    let p = records.iter().filter(|r| r.label == Label::Include).count();
    let votes = args
        .llm_judgements
        .as_deref()
        .map(|path| load_votes(path, &records))
        .transpose()?;

    let effective = config.effective_seeds(p);
    let _ = writeln!(stderr, "{} records, {p} relevant", records.len());
    if effective != config.n_seeds {
        let _ = writeln!(
            stderr,
            "seeds: {effective} (fewer than {SMALL_P_THRESHOLD} relevant records; {} requested)",
            config.n_seeds
        );
    } else {
        let _ = writeln!(stderr, "seeds: {effective}");
    }

    let embedder = HashingEmbedder::new(args.embedding_dim.max(1));
    let go = || simulate(&records, &embedder, &config, votes.as_ref());
    let result = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(go),
        None => go(),
    }
    .map_err(|e| match e {
        horizon_core::eval::SimulationError::Config(_)
        | horizon_core::eval::SimulationError::TooFewRelevant { .. }
        | horizon_core::eval::SimulationError::NoIrrelevant
        | horizon_core::eval::SimulationError::Unlabeled => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;

    write_outputs(&result, &args.out)?;
    write!(stdout, "{}", report_text(&result.report)).map_err(|e| CliError::Runtime(e.to_string()))
}
