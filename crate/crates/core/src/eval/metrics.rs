use serde::{Deserialize, Serialize};

/// Screening cut-offs, as fractions of the dataset, for which recall is
/// reported.
pub const RECALL_FRACTIONS: [f64; 4] = [0.50, 0.75, 0.90, 0.95];

/// Target recall for WSS and TNR.
pub const TARGET_RECALL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("cutoff {k} outside 0..={n}")]
    CutoffOutOfRange { k: usize, n: usize },
    #[error("no relevant records")]
    NoRelevant,
    #[error("no irrelevant records")]
    NoNegatives,
    #[error("nothing screened yet")]
    NothingScreened,
    #[error("target {0} outside (0, 1]")]
    InvalidTarget(f64),
    #[error("no runs to aggregate")]
    NoRuns,
}

/// Records in screening order with their gold relevance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub ids: Vec<String>,
    pub relevant: Vec<bool>,
}

impl Trajectory {
    pub fn new(items: Vec<(String, bool)>) -> Self {
        let (ids, relevant) = items.into_iter().unzip();
        Self { ids, relevant }
    }

    /// Ids are the 1-based positions.
    pub fn from_flags(relevant: &[bool]) -> Self {
        Self {
            ids: (1..=relevant.len()).map(|i| i.to_string()).collect(),
            relevant: relevant.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.relevant.len()
    }

    pub fn p(&self) -> usize {
        self.relevant.iter().filter(|&&r| r).count()
    }

    /// True if the ids are exactly a permutation of `ids`.
    pub fn is_permutation_of(&self, ids: &[String]) -> bool {
        let mut a = self.ids.clone();
        let mut b = ids.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    }

    /// Relevant records among the first k, for k = 0..=N.
    fn cumulative_tp(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n() + 1);
        out.push(0);
        let mut tp = 0;
        for &r in &self.relevant {
            tp += usize::from(r);
            out.push(tp);
        }
        out
    }
}

/// Counts when the first `k` records are taken as predicted relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    fn from_tp(tp: usize, k: usize, n: usize, p: usize) -> Self {
        let fn_ = p - tp;
        Self {
            tp,
            fp: k - tp,
            tn: n - k - fn_,
            fn_,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion_at(trajectory: &Trajectory, k: usize) -> Result<ConfusionCounts, MetricError> {
    let n = trajectory.n();
    if k > n {
        return Err(MetricError::CutoffOutOfRange { k, n });
    }
    let tp = trajectory.relevant[..k].iter().filter(|&&r| r).count();
    Ok(ConfusionCounts::from_tp(tp, k, n, trajectory.p()))
}

pub fn recall(c: &ConfusionCounts) -> Result<f64, MetricError> {
    match c.tp + c.fn_ {
        0 => Err(MetricError::NoRelevant),
        d => Ok(c.tp as f64 / d as f64),
    }
}

pub fn precision(c: &ConfusionCounts) -> Result<f64, MetricError> {
    match c.tp + c.fp {
        0 => Err(MetricError::NothingScreened),
        d => Ok(c.tp as f64 / d as f64),
    }
}

fn check_target(r: f64) -> Result<(), MetricError> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidTarget(r))
    }
}

/// Smallest cutoff whose recall reaches `r`, with counts at that cutoff.
pub fn first_crossing(trajectory: &Trajectory, r: f64) -> Result<(usize, ConfusionCounts), MetricError> {
    check_target(r)?;
    let (n, p) = (trajectory.n(), trajectory.p());
    if p == 0 {
        return Err(MetricError::NoRelevant);
    }
    let cum = trajectory.cumulative_tp();
    let k = (0..=n)
        .find(|&k| cum[k] as f64 / p as f64 >= r)
        .expect("recall reaches 1 at k = N");
    Ok((k, ConfusionCounts::from_tp(cum[k], k, n, p)))
}

/// Work saved over sampling at recall `r`: `(TN + FN) / N - (1 - r)` at the
/// first cutoff reaching `r`.
pub fn wss_at_r(trajectory: &Trajectory, r: f64) -> Result<f64, MetricError> {
    let (_, c) = first_crossing(trajectory, r)?;
    Ok((c.tn + c.fn_) as f64 / trajectory.n() as f64 - (1.0 - r))
}

/// True-negative rate at the first cutoff reaching `r`.
pub fn tnr_at_r(trajectory: &Trajectory, r: f64) -> Result<f64, MetricError> {
    if trajectory.p() == trajectory.n() {
        return Err(MetricError::NoNegatives);
    }
    let (_, c) = first_crossing(trajectory, r)?;
    Ok(c.tn as f64 / (c.tn + c.fp) as f64)
}

/// Screening cutoff `floor(f * N)`. A tolerance of 1e-9 absorbs products
/// such as 0.95 * 20 that land just below an integer.
pub fn cutoff_for_fraction(f: f64, n: usize) -> usize {
    ((f * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Recall after screening the first `floor(f * N)` records.
pub fn recall_at_fraction(trajectory: &Trajectory, f: f64) -> Result<f64, MetricError> {
    check_target(f)?;
    let c = confusion_at(trajectory, cutoff_for_fraction(f, trajectory.n()))?;
    recall(&c)
}

/// Mean of precision@i over the positions i of relevant records.
pub fn average_precision(trajectory: &Trajectory) -> Result<f64, MetricError> {
    let p = trajectory.p();
    if p == 0 {
        return Err(MetricError::NoRelevant);
    }
    let mut tp = 0;
    let mut sum = 0.0;
    for (i, &r) in trajectory.relevant.iter().enumerate() {
        if r {
            tp += 1;
            sum += tp as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// Percent of the dataset screened when the last relevant record appears.
pub fn last_include_pct(trajectory: &Trajectory) -> Result<f64, MetricError> {
    let last = trajectory
        .relevant
        .iter()
        .rposition(|&r| r)
        .ok_or(MetricError::NoRelevant)?;
    Ok(100.0 * (last + 1) as f64 / trajectory.n() as f64)
}

/// Metrics of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n: usize,
    pub p: usize,
    pub wss95: f64,
    /// `None` when the trajectory has no irrelevant records.
    pub tnr95: Option<f64>,
    pub recall50: f64,
    pub recall75: f64,
    pub recall90: f64,
    pub recall95: f64,
    pub average_precision: f64,
    pub last_include_pct: f64,
}

pub fn compute_metrics(trajectory: &Trajectory) -> Result<RunMetrics, MetricError> {
    let r = |f| recall_at_fraction(trajectory, f);
    Ok(RunMetrics {
        n: trajectory.n(),
        p: trajectory.p(),
        wss95: wss_at_r(trajectory, TARGET_RECALL)?,
        tnr95: match tnr_at_r(trajectory, TARGET_RECALL) {
            Ok(v) => Some(v),
            Err(MetricError::NoNegatives) => None,
            Err(e) => return Err(e),
        },
        recall50: r(RECALL_FRACTIONS[0])?,
        recall75: r(RECALL_FRACTIONS[1])?,
        recall90: r(RECALL_FRACTIONS[2])?,
        recall95: r(RECALL_FRACTIONS[3])?,
        average_precision: average_precision(trajectory)?,
        last_include_pct: last_include_pct(trajectory)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdKind {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1 (0 for a single run).
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

pub fn mean_sd(values: &[f64], kind: SdKind) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = match kind {
        SdKind::Population => (ss / n).sqrt(),
        SdKind::Sample if values.len() > 1 => (ss / (n - 1.0)).sqrt(),
        SdKind::Sample => 0.0,
    };
    Some(Stat { mean, sd })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub wss95: Stat,
    /// Over the runs where TNR is defined.
    pub tnr95: Option<Stat>,
    pub recall50: Stat,
    pub recall75: Stat,
    pub recall90: Stat,
    pub recall95: Stat,
    pub average_precision: Stat,
    pub last_include_pct: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sd_kind: SdKind,
    pub runs: Vec<RunMetrics>,
    pub aggregate: AggregateMetrics,
}

pub fn aggregate_runs(runs: &[RunMetrics], sd_kind: SdKind) -> Result<MetricsReport, MetricError> {
    if runs.is_empty() {
        return Err(MetricError::NoRuns);
    }
    let stat = |f: fn(&RunMetrics) -> f64| {
        let v: Vec<f64> = runs.iter().map(f).collect();
        mean_sd(&v, sd_kind).expect("non-empty")
    };
    let tnr: Vec<f64> = runs.iter().filter_map(|r| r.tnr95).collect();
    Ok(MetricsReport {
        sd_kind,
        runs: runs.to_vec(),
        aggregate: AggregateMetrics {
            wss95: stat(|r| r.wss95),
            tnr95: mean_sd(&tnr, sd_kind),
            recall50: stat(|r| r.recall50),
            recall75: stat(|r| r.recall75),
            recall90: stat(|r| r.recall90),
            recall95: stat(|r| r.recall95),
            average_precision: stat(|r| r.average_precision),
            last_include_pct: stat(|r| r.last_include_pct),
        },
    })
}

pub const RUN_COLUMNS: [&str; 11] = [
    "run",
    "n",
    "p",
    "wss95",
    "tnr95",
    "recall50",
    "recall75",
    "recall90",
    "recall95",
    "average_precision",
    "last_include_pct",
];

/// One row per run, floats in shortest round-trip form.
pub fn runs_csv(report: &MetricsReport) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(RUN_COLUMNS).expect("in-memory writer");
    for (i, r) in report.runs.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.n.to_string(),
            r.p.to_string(),
            r.wss95.to_string(),
            r.tnr95.map(|v| v.to_string()).unwrap_or_default(),
            r.recall50.to_string(),
            r.recall75.to_string(),
            r.recall90.to_string(),
            r.recall95.to_string(),
            r.average_precision.to_string(),
            r.last_include_pct.to_string(),
        ])
        .expect("in-memory writer");
    }
    w.into_inner().expect("in-memory writer")
}

/// Plain-text summary: one `metric  mean ± sd` line per metric.
pub fn report_text(report: &MetricsReport) -> String {
    let a = &report.aggregate;
    let line = |name: &str, s: &Stat| format!("{name:<22}{:>8.4} \u{b1} {:.4}\n", s.mean, s.sd);
    let mut out = format!(
        "runs: {} (SD: {})\n",
        report.runs.len(),
        match report.sd_kind {
            SdKind::Population => "population",
            SdKind::Sample => "sample",
        }
    );
    out.push_str(&line("WSS@95", &a.wss95));
    match &a.tnr95 {
        Some(s) => out.push_str(&line("TNR@95", s)),
        None => out.push_str("TNR@95                     n/a\n"),
    }
    out.push_str(&line("recall@50% screened", &a.recall50));
    out.push_str(&line("recall@75% screened", &a.recall75));
    out.push_str(&line("recall@90% screened", &a.recall90));
    out.push_str(&line("recall@95% screened", &a.recall95));
    out.push_str(&line("average precision", &a.average_precision));
    out.push_str(&line("last include at %", &a.last_include_pct));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub screened: usize,
    pub fraction_screened: f64,
    pub recall: f64,
    /// Expected recall under random screening order.
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    pub n: usize,
    pub p: usize,
    /// Leading records (seeds) excluded from the crossing check.
    pub seed_prefix: usize,
    pub points: Vec<GainPoint>,
    /// Some point after the seed prefix lies strictly below the diagonal.
    pub crosses_diagonal: bool,
}

pub fn gain_curve(trajectory: &Trajectory, seed_prefix: usize) -> Result<GainCurve, MetricError> {
    let (n, p) = (trajectory.n(), trajectory.p());
    if p == 0 {
        return Err(MetricError::NoRelevant);
    }
    let cum = trajectory.cumulative_tp();
    let points: Vec<GainPoint> = (1..=n)
        .map(|k| GainPoint {
            screened: k,
            fraction_screened: k as f64 / n as f64,
            recall: cum[k] as f64 / p as f64,
            baseline: k as f64 / n as f64,
        })
        .collect();
    // recall < fraction  <=>  tp * N < k * P, compared exactly in integers
    let crosses_diagonal = (seed_prefix + 1..=n).any(|k| cum[k] * n < k * p);
    Ok(GainCurve {
        n,
        p,
        seed_prefix,
        points,
        crosses_diagonal,
    })
}

pub fn gain_curve_csv(curve: &GainCurve) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(["screened", "fraction_screened", "recall", "baseline"])
        .expect("in-memory writer");
    for pt in &curve.points {
        w.write_record([
            pt.screened.to_string(),
            pt.fraction_screened.to_string(),
            pt.recall.to_string(),
            pt.baseline.to_string(),
        ])
        .expect("in-memory writer");
    }
    w.into_inner().expect("in-memory writer")
}
