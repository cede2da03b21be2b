use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use super::synthetic::{noisy_votes, two_cluster_corpus, CorpusSpec};
use super::*;
use crate::embedding::HashingEmbedder;
use crate::io::import_csv;
use crate::ranking::RankerKind;
use crate::record::ColumnMapping;

fn flags(n: usize, relevant_positions: &[usize]) -> Trajectory {
    let mut v = vec![false; n];
    for &p in relevant_positions {
        v[p - 1] = true;
    }
    Trajectory::from_flags(&v)
}

fn perfect() -> Trajectory {
    flags(100, &(1..=10).collect::<Vec<_>>())
}

fn reverse() -> Trajectory {
    flags(100, &(91..=100).collect::<Vec<_>>())
}

/// Independent oracle: counts rebuilt from scratch at every cutoff, target
/// given as an exact fraction num/den.
fn brute(relevant: &[bool], num: usize, den: usize) -> (f64, Option<f64>) {
    let n = relevant.len();
    let p = relevant.iter().filter(|&&r| r).count();
    for k in 0..=n {
        let tp = relevant.iter().take(k).filter(|&&r| r).count();
        if tp * den >= num * p {
            let fp = k - tp;
            let fn_ = p - tp;
            let tn = relevant.iter().skip(k).filter(|&&r| !r).count();
            assert_eq!(tp + fp + tn + fn_, n);
            let wss = (tn + fn_) as f64 / n as f64 - (1.0 - num as f64 / den as f64);
            let tnr = (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64);
            return (wss, tnr);
        }
    }
    unreachable!("recall 1 reached at k = N")
}

#[test]
fn confusion_examples() {
    let t = flags(10, &[1, 2]);
    assert_eq!(
        confusion_at(&t, 2).unwrap(),
        ConfusionCounts {
            tp: 2,
            fp: 0,
            tn: 8,
            fn_: 0
        }
    );
    let c0 = confusion_at(&t, 0).unwrap();
    assert_eq!((c0.tp, c0.fp, c0.fn_, c0.tn), (0, 0, 2, 8));
    let cn = confusion_at(&t, 10).unwrap();
    assert_eq!((cn.fn_, cn.tn), (0, 0));
    assert_eq!(
        confusion_at(&t, 11),
        Err(MetricError::CutoffOutOfRange { k: 11, n: 10 })
    );
}

#[test]
fn recall_precision_examples() {
    assert_eq!(
        recall(&ConfusionCounts {
            tp: 2,
            fp: 0,
            tn: 0,
            fn_: 0
        })
        .unwrap(),
        1.0
    );
    assert_eq!(
        recall(&ConfusionCounts {
            tp: 1,
            fp: 0,
            tn: 0,
            fn_: 1
        })
        .unwrap(),
        0.5
    );
    assert_eq!(
        precision(&ConfusionCounts {
            tp: 3,
            fp: 1,
            tn: 0,
            fn_: 0
        })
        .unwrap(),
        3.0 / 4.0
    );
    assert_eq!(
        recall(&ConfusionCounts {
            tp: 0,
            fp: 3,
            tn: 2,
            fn_: 0
        }),
        Err(MetricError::NoRelevant)
    );
    assert_eq!(
        precision(&ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 2,
            fn_: 1
        }),
        Err(MetricError::NothingScreened)
    );
}

#[test]
fn wss_tnr_anchors() {
    let (k, c) = first_crossing(&perfect(), 0.95).unwrap();
    assert_eq!(k, 10);
    assert_eq!((c.tn, c.fn_), (90, 0));
    assert!((wss_at_r(&perfect(), 0.95).unwrap() - (90.0 / 100.0 - 0.05)).abs() < 1e-12);
    assert_eq!(tnr_at_r(&perfect(), 0.95).unwrap(), 1.0);

    let (k, _) = first_crossing(&reverse(), 0.95).unwrap();
    assert_eq!(k, 100);
    assert!((wss_at_r(&reverse(), 0.95).unwrap() - (0.0 - 0.05)).abs() < 1e-12);
    assert_eq!(tnr_at_r(&reverse(), 0.95).unwrap(), 0.0);
}

#[test]
fn wss_uses_ceiling_of_target_for_larger_p() {
    // P = 40: 95% recall needs ceil(38) = 38 relevant, so two relevant
    // records may trail without cost
    let mut pos: Vec<usize> = (1..=38).collect();
    pos.extend([99, 100]);
    let t = flags(100, &pos);
    let (k, c) = first_crossing(&t, 0.95).unwrap();
    assert_eq!(k, 38);
    assert_eq!(c.fn_, 2);
    assert!((wss_at_r(&t, 0.95).unwrap() - ((60.0 + 2.0) / 100.0 - 0.05)).abs() < 1e-12);
}

#[test]
fn metric_errors() {
    let none = Trajectory::from_flags(&[false, false]);
    assert_eq!(wss_at_r(&none, 0.95), Err(MetricError::NoRelevant));
    let all = Trajectory::from_flags(&[true, true]);
    assert_eq!(tnr_at_r(&all, 0.95), Err(MetricError::NoNegatives));
    assert_eq!(wss_at_r(&perfect(), 0.0), Err(MetricError::InvalidTarget(0.0)));
    assert!(wss_at_r(&perfect(), 1.5).is_err());
}

#[test]
fn recall_at_fraction_examples() {
    assert_eq!(recall_at_fraction(&perfect(), 0.5).unwrap(), 1.0);
    assert_eq!(recall_at_fraction(&reverse(), 0.5).unwrap(), 0.0);
    assert_eq!(recall_at_fraction(&reverse(), 1.0).unwrap(), 1.0);
    // floor(0.75 * 10) = 7
    let t = flags(10, &[7, 8]);
    assert_eq!(recall_at_fraction(&t, 0.75).unwrap(), 0.5);
    assert_eq!(cutoff_for_fraction(0.95, 20), 19);
    assert_eq!(cutoff_for_fraction(0.5, 7), 3);
}

#[test]
fn average_precision_examples() {
    assert_eq!(average_precision(&perfect()).unwrap(), 1.0);
    assert_eq!(average_precision(&Trajectory::from_flags(&[false, true])).unwrap(), 0.5);
    // relevant at 1 and 3: (1/1 + 2/3) / 2
    let ap = average_precision(&Trajectory::from_flags(&[true, false, true])).unwrap();
    assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
}

fn permutations(items: &[bool]) -> Vec<Vec<bool>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

#[test]
fn ap_ignores_irrelevant_tail_order() {
    // every arrangement of N <= 8 records; permuting the irrelevant tail
    // after the last relevant record must not change AP
    for n in 1..=8usize {
        for p in 1..=n {
            let base: Vec<bool> = (0..n).map(|i| i < p).collect();
            for perm in permutations(&base) {
                let last = perm.iter().rposition(|&r| r).unwrap();
                let mut shuffled = perm.clone();
                shuffled[last + 1..].reverse();
                let a = average_precision(&Trajectory::from_flags(&perm)).unwrap();
                let b = average_precision(&Trajectory::from_flags(&shuffled)).unwrap();
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn last_include_examples() {
    assert_eq!(last_include_pct(&flags(100, &[3, 70])).unwrap(), 70.0);
    assert_eq!(last_include_pct(&flags(100, &[1])).unwrap(), 1.0);
    assert_eq!(last_include_pct(&Trajectory::from_flags(&[true; 5])).unwrap(), 100.0);
}

#[test]
fn aggregation() {
    let m = compute_metrics(&perfect()).unwrap();
    let r = aggregate_runs(&[m.clone(), m.clone(), m.clone()], SdKind::Population).unwrap();
    assert_eq!(r.aggregate.wss95.sd, 0.0);
    assert_eq!(r.aggregate.wss95.mean, m.wss95);

    let s = mean_sd(&[0.4, 0.6], SdKind::Population).unwrap();
    assert!((s.mean - 0.5).abs() < 1e-15);
    assert!((s.sd - 0.1).abs() < 1e-15);
    let s = mean_sd(&[0.4, 0.6], SdKind::Sample).unwrap();
    assert!((s.sd - 0.02f64.sqrt()).abs() < 1e-15);
    assert_eq!(mean_sd(&[0.7], SdKind::Sample).unwrap().sd, 0.0);
    assert_eq!(aggregate_runs(&[], SdKind::Population), Err(MetricError::NoRuns));
}

#[test]
fn runs_csv_and_text() {
    let r = aggregate_runs(&[compute_metrics(&perfect()).unwrap()], SdKind::Population).unwrap();
    let csv = String::from_utf8(runs_csv(&r)).unwrap();
    let mut lines = csv.split("\r\n");
    assert_eq!(lines.next().unwrap(), RUN_COLUMNS.join(","));
    assert!(lines.next().unwrap().starts_with("1,100,10,0.85"));
    let text = report_text(&r);
    assert!(text.contains("WSS@95"));
    assert!(text.contains("recall@75% screened"));
}

#[test]
fn gain_curve_examples() {
    let g = gain_curve(&perfect(), 0).unwrap();
    assert_eq!(g.points.len(), 100);
    let reach = g.points.iter().find(|pt| pt.recall == 1.0).unwrap();
    assert_eq!(reach.fraction_screened, 10.0 / 100.0);
    assert!(!g.crosses_diagonal);
    assert!(gain_curve(&reverse(), 0).unwrap().crosses_diagonal);

    // a dip inside the seed prefix is ignored
    let t = flags(10, &[2, 3, 4, 5]);
    assert!(gain_curve(&t, 0).unwrap().crosses_diagonal);
    assert!(!gain_curve(&t, 1).unwrap().crosses_diagonal);

    let csv = String::from_utf8(gain_curve_csv(&gain_curve(&flags(4, &[1, 3]), 0).unwrap())).unwrap();
    assert_eq!(
        csv,
        "screened,fraction_screened,recall,baseline\r\n1,0.25,0.5,0.25\r\n2,0.5,0.5,0.5\r\n3,0.75,1,0.75\r\n4,1,1,1\r\n"
    );
}

fn trajectories(max_n: usize) -> impl Strategy<Value = Vec<bool>> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n).prop_filter("needs a relevant record", |v| v.iter().any(|&r| r))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_brute_force(v in trajectories(50), target in prop::sample::select(vec![(95usize, 100usize), (90, 100), (1, 2), (1, 1), (4, 5)])) {
        let t = Trajectory::from_flags(&v);
        let r = target.0 as f64 / target.1 as f64;
        let (wss, tnr) = brute(&v, target.0, target.1);
        prop_assert!((wss_at_r(&t, r).unwrap() - wss).abs() <= 1e-12);
        match tnr {
            Some(x) => prop_assert!((tnr_at_r(&t, r).unwrap() - x).abs() <= 1e-12),
            None => prop_assert_eq!(tnr_at_r(&t, r), Err(MetricError::NoNegatives)),
        }
    }

    #[test]
    fn bounds_and_count_identities(v in trajectories(60), k_frac in 0.0f64..=1.0) {
        let t = Trajectory::from_flags(&v);
        let k = (k_frac * t.n() as f64) as usize;
        let c = confusion_at(&t, k).unwrap();
        prop_assert_eq!(c.tp + c.fp, k);
        prop_assert_eq!(c.tp + c.fn_, t.p());
        prop_assert_eq!(c.total(), t.n());
        let m = compute_metrics(&t).unwrap();
        prop_assert!((-0.05 - 1e-12..=0.95).contains(&m.wss95));
        if let Some(tnr) = m.tnr95 {
            prop_assert!((0.0..=1.0).contains(&tnr));
        }
        for r in [m.recall50, m.recall75, m.recall90, m.recall95, m.average_precision] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        prop_assert!(m.recall50 <= m.recall75 && m.recall75 <= m.recall90 && m.recall90 <= m.recall95);
        prop_assert!(m.last_include_pct > 0.0 && m.last_include_pct <= 100.0);
    }

    #[test]
    fn reversing_perfect_flips_tnr(n in 2usize..200, p_frac in 0.01f64..0.99) {
        let p = ((p_frac * n as f64) as usize).clamp(1, n - 1);
        let v: Vec<bool> = (0..n).map(|i| i < p).collect();
        let mut rev = v.clone();
        rev.reverse();
        prop_assert_eq!(tnr_at_r(&Trajectory::from_flags(&v), 0.95).unwrap(), 1.0);
        prop_assert_eq!(tnr_at_r(&Trajectory::from_flags(&rev), 0.95).unwrap(), 0.0);
    }

    #[test]
    fn tnr_is_prevalence_free(
        pos_quality in prop::collection::vec(0.0f64..1.0, 20),
        neg_quality in prop::collection::vec(0.0f64..1.0, 20),
    ) {
        // Two datasets whose positives sit at the same relative positions
        // among positives, and negatives among negatives: 20 positives with
        // 80 or 1980 negatives (prevalence 20% vs 1%). Negative i of the
        // small set stands for a block of 24.75 negatives in the large one,
        // so scores are replicated to keep the interleaving identical.
        let build = |neg_copies: usize| {
            let mut items: Vec<(f64, bool)> = pos_quality.iter().map(|&q| (q, true)).collect();
            for (j, &q) in neg_quality.iter().enumerate() {
                for c in 0..neg_copies {
                    items.push((q + (j * neg_copies + c) as f64 * 1e-12, false));
                }
            }
            items.sort_by(|a, b| b.0.total_cmp(&a.0));
            Trajectory::from_flags(&items.iter().map(|x| x.1).collect::<Vec<_>>())
        };
        let small = build(4);
        let large = build(99);
        prop_assert_eq!(small.p(), large.p());
        prop_assert!((small.p() as f64 / small.n() as f64 - 0.2).abs() < 1e-12);
        prop_assert!((large.p() as f64 / large.n() as f64 - 0.01).abs() < 1e-12);
        prop_assert_eq!(tnr_at_r(&small, 0.95).unwrap(), tnr_at_r(&large, 0.95).unwrap());
    }
}

fn small_corpus() -> Vec<crate::RecordItem> {
    two_cluster_corpus(&CorpusSpec::separable(200, 40, 7))
}

#[test]
fn synthetic_corpus_shape() {
    let c = small_corpus();
    assert_eq!(c.len(), 200);
    assert_eq!(c.iter().filter(|r| r.label == Label::Include).count(), 40);
    assert_eq!(c, small_corpus());
    let votes = noisy_votes(&c, 1.0, 1);
    assert!(c.iter().all(|r| votes[&r.id] == u8::from(r.label == Label::Include)));
}

fn quick_config() -> SimulationConfig {
    SimulationConfig {
        n_runs: 3,
        ..SimulationConfig::default()
    }
}

#[test]
fn oracle_ranker_front_loads() {
    let c = small_corpus();
    let cfg = SimulationConfig {
        ranker: SimRanker::Oracle,
        ..quick_config()
    };
    let res = simulate(&c, &HashingEmbedder::default(), &cfg, None).unwrap();
    for run in &res.runs {
        let t = &run.trajectory;
        assert!(t.is_permutation_of(&c.iter().map(|r| r.id.clone()).collect::<Vec<_>>()));
        assert_eq!(&t.ids[..5], run.seed_ids.as_slice());
        assert!(t.relevant[..40].iter().all(|&r| r));
        assert!(t.relevant[40..].iter().all(|&r| !r));
    }
}

#[test]
fn random_ranker_saves_no_work_on_average() {
    let c = two_cluster_corpus(&CorpusSpec::separable(1000, 100, 17));
    let cfg = SimulationConfig {
        ranker: SimRanker::Random,
        ..SimulationConfig::default()
    };
    let res = simulate(&c, &HashingEmbedder::default(), &cfg, None).unwrap();
    assert_eq!(res.runs.len(), 15);
    let mean = res.report.aggregate.wss95.mean;
    assert!(mean.abs() <= 0.05, "{mean}");
    assert!(res.manifest.reranks.iter().all(Vec::is_empty));
}

#[test]
fn engine_runs_are_valid_and_deterministic() {
    let c = small_corpus();
    let e = HashingEmbedder::default();
    let a = simulate(&c, &e, &quick_config(), None).unwrap();
    let b = simulate(&c, &e, &quick_config(), None).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for run in &a.runs {
        assert_eq!(run.trajectory.n(), 200);
        assert_eq!(run.trajectory.p(), 40);
        assert!(
            run.metrics.wss95 > 0.3,
            "separable corpus should rank well: {}",
            run.metrics.wss95
        );
        // a rerank per batch of 10 after the 5 seeds
        assert_eq!(run.reranks.len(), (200 - 5usize).div_ceil(10));
        for log in &run.reranks {
            let sgd = log.iteration % 5 == 0;
            assert_eq!(log.base_ranker == RankerKind::Sgd, sgd && !log.fallback);
            assert!(log.n_seeds_used <= 10);
        }
    }
    let other = simulate(
        &c,
        &e,
        &SimulationConfig {
            rng_seed: 7,
            ..quick_config()
        },
        None,
    )
    .unwrap();
    assert_ne!(other.runs[0].trajectory, a.runs[0].trajectory);
}

#[test]
fn seeds_free_drops_seed_prefix() {
    let c = small_corpus();
    let cfg = SimulationConfig {
        seeds_free: true,
        ranker: SimRanker::Oracle,
        ..quick_config()
    };
    let res = simulate(&c, &HashingEmbedder::default(), &cfg, None).unwrap();
    assert_eq!(res.runs[0].trajectory.n(), 195);
    assert_eq!(res.runs[0].trajectory.p(), 35);
    assert!(!res.runs[0].trajectory.ids.contains(&res.runs[0].seed_ids[0]));
}

#[test]
fn small_p_uses_one_seed() {
    let c = two_cluster_corpus(&CorpusSpec::separable(120, 12, 3));
    let res = simulate(&c, &HashingEmbedder::default(), &quick_config(), None).unwrap();
    assert_eq!(res.manifest.n_seeds_effective, 1);
    assert!(res.runs.iter().all(|r| r.seed_ids.len() == 1));
    assert_eq!(quick_config().effective_seeds(29), 1);
    assert_eq!(quick_config().effective_seeds(30), 5);
}

#[test]
fn llm_votes_enter_the_manifest() {
    let c = small_corpus();
    let votes = noisy_votes(&c, 0.9, 5);
    let mut cfg = quick_config();
    cfg.ensemble.llm_enabled = true;
    let res = simulate(&c, &HashingEmbedder::default(), &cfg, Some(&votes)).unwrap();
    assert_eq!(res.manifest.combine_rule, "base + bit");
    assert_eq!(res.manifest.score_range, (0.0, 2.0));
    for log in res.manifest.reranks.iter().flatten() {
        assert!(log.llm_applied);
        assert_eq!(log.ranker, RankerKind::LlmEnsemble);
        assert!(log.max_score.unwrap() <= 2.0 && log.min_score.unwrap() >= 0.0);
    }
}

#[test]
fn simulation_errors() {
    let e = HashingEmbedder::default();
    let mut c = two_cluster_corpus(&CorpusSpec::separable(60, 0, 3));
    assert!(matches!(
        simulate(&c, &e, &quick_config(), None),
        Err(SimulationError::TooFewRelevant { needed: 1, found: 0 })
    ));
    c[0].label = Label::Unlabeled;
    assert_eq!(
        simulate(&c, &e, &quick_config(), None).unwrap_err(),
        SimulationError::Unlabeled
    );
    let all = two_cluster_corpus(&CorpusSpec::separable(10, 10, 3));
    assert_eq!(
        simulate(&all, &e, &quick_config(), None).unwrap_err(),
        SimulationError::NoIrrelevant
    );
    let bad = SimulationConfig {
        batch_size: 0,
        ..quick_config()
    };
    assert!(matches!(
        simulate(&small_corpus(), &e, &bad, None),
        Err(SimulationError::Config(_))
    ));
}

fn labelled_project() -> Project {
    let mut csv = String::from("id,text\r\n");
    for i in 1..=8 {
        csv.push_str(&format!("{i},record {i}\r\n"));
    }
    import_csv(csv.as_bytes(), &ColumnMapping::new("text").with_id("id")).unwrap()
}

#[test]
fn mini_report_over_viewed_records() {
    let mut p = labelled_project();
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    for (i, (id, label)) in [
        ("3", Label::Include),
        ("5", Label::Exclude),
        ("1", Label::Include),
        ("2", Label::Exclude),
    ]
    .into_iter()
    .enumerate()
    {
        p.apply_label_at(id, label, t0 + chrono::Duration::seconds(i as i64))
            .unwrap();
    }
    let r = mini_report(&p).unwrap();
    assert_eq!(r.notice, "based on partially screened data");
    assert_eq!((r.n_viewed, r.n_includes, r.n_excludes), (4, 2, 2));
    let t = Trajectory::from_flags(&[true, false, true, false]);
    assert_eq!(r.metrics, compute_metrics(&t).unwrap());
    assert_eq!(r.wss95, wss_at_r(&t, 0.95).unwrap());
    assert_eq!(r.nwss95, Some(tnr_at_r(&t, 0.95).unwrap()));
    assert_eq!(r.recall50, recall_at_fraction(&t, 0.5).unwrap());
    assert_eq!(r.gain_curve.points.len(), 4);

    let mut empty = labelled_project();
    empty.apply_label("4", Label::Exclude).unwrap();
    assert_eq!(mini_report(&empty).unwrap_err(), MetricError::NoRelevant);
}

#[test]
fn mini_report_on_complete_project_equals_full_metrics() {
    let c = small_corpus();
    let mut p = labelled_project();
    p.records = c.clone();
    let r = mini_report(&p).unwrap();
    let gold = Trajectory::new(c.iter().map(|r| (r.id.clone(), r.label == Label::Include)).collect());
    assert_eq!(r.metrics, compute_metrics(&gold).unwrap());
    assert_eq!(r.gain_curve.seed_prefix, 200);
}

#[test]
fn project_report_carries_rerank_provenance() {
    use crate::ranking::{rerank, EnsembleConfig};
    let mut p = labelled_project();
    for id in ["1", "2", "3"] {
        p.apply_label(id, Label::Include).unwrap();
    }
    p.apply_label("4", Label::Exclude).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    rerank(
        &mut p,
        &EnsembleConfig::default(),
        &mut rng,
        &HashingEmbedder::default(),
        None,
    )
    .unwrap();
    let report = project_report(&p).unwrap();
    assert_eq!(report.iteration, 1);
    assert_eq!(report.rerank_history, p.ranking_history);
    assert_eq!(report.report, mini_report(&p).unwrap());

    let bytes = project_report_json(&p).unwrap();
    assert_eq!(bytes.last(), Some(&b'\n'));
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["wss95"], serde_json::json!(report.report.wss95));
    assert_eq!(v["rerank_history"][0]["ranker_used"], "similarity");
    let back: ProjectReport = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(back, report);
}

#[test]
fn partial_ensemble_json_uses_defaults() {
    use crate::ranking::EnsembleConfig;
    let c: EnsembleConfig = serde_json::from_str(r#"{"llm_enabled": true}"#).unwrap();
    assert!(c.llm_enabled);
    assert_eq!(c.sgd_period, Some(5));
    let off: EnsembleConfig = serde_json::from_str(r#"{"sgd_period": null}"#).unwrap();
    assert_eq!(off.sgd_period, None);
}
