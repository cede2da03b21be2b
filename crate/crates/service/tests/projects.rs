mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use common::{mapping, topic_csv, Api, GatedEmbedder};
use horizon_core::embedding::HashingEmbedder;
use horizon_core::eval::{compute_metrics, project_report_json, Trajectory};
use horizon_core::io::import_csv;
use horizon_core::llm::StubProvider;
use horizon_core::ranking::{EnsembleConfig, Reranker};
use horizon_core::record::{replay_labels, ColumnMapping};
use horizon_core::Label;
use horizon_service::projects::{ProjectSummary, QueueResponse, RerankResponse};
use horizon_service::{AppState, ErrorCode, ServiceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

fn api() -> Api {
    Api::new(AppState::offline(ServiceConfig::default()))
}

async fn new_project(api: &Api, n: usize, n_rel: usize) -> String {
    let r = api.create_project(&topic_csv(n, n_rel, false), mapping()).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json::<ProjectSummary>().project_id
}

async fn label(api: &Api, id: &str, labels: &[(&str, &str)]) -> ProjectSummary {
    let body: Vec<_> = labels
        .iter()
        .map(|(r, l)| json!({ "record_id": r, "label": l }))
        .collect();
    let r = api.post_json(&format!("/projects/{id}/labels"), json!(body)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    r.json()
}

async fn queue_ids(api: &Api, id: &str, limit: Option<usize>) -> Vec<String> {
    let uri = match limit {
        Some(n) => format!("/projects/{id}/queue?limit={n}"),
        None => format!("/projects/{id}/queue"),
    };
    let q: QueueResponse = api.get(&uri).await.json();
    q.items.into_iter().map(|i| i.record_id).collect()
}

async fn state_hash(api: &Api, id: &str) -> String {
    let slot = api.state.project(id).unwrap();
    let project = slot.project.lock().await;
    hex::encode(Sha256::digest(serde_json::to_vec(&*project).unwrap()))
}

#[tokio::test]
async fn valid_csv_creates_a_project() {
    let api = api();
    let r = api.create_project(&topic_csv(12, 4, false), mapping()).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let s: ProjectSummary = r.json();
    assert_eq!((s.n_records, s.n_unlabeled, s.iteration), (12, 12, 0));
    assert!(!s.rerank_permitted);
    assert_eq!(s.columns, vec!["id", "title", "abstract"]);

    let again: ProjectSummary = api.get(&format!("/projects/{}", s.project_id)).await.json();
    assert_eq!(again, s);
    let twin: ProjectSummary = api.create_project(&topic_csv(12, 4, false), mapping()).await.json();
    assert_ne!(twin.project_id, s.project_id);
}

#[tokio::test]
async fn missing_text_column_is_a_400_naming_the_column() {
    let r = api()
        .create_project(&topic_csv(5, 1, false), json!({ "text_column": "Abstract Text" }))
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let e = r.error();
    assert_eq!(e.code, ErrorCode::BadRequest);
    assert!(e.message.contains("Abstract Text"));
    assert_eq!(e.detail.unwrap()["column"], "Abstract Text");
}

#[tokio::test]
async fn malformed_uploads_are_400() {
    let api = api();
    let r = api.post_multipart("/projects", &[("file", b"a,b\r\n1,2\r\n")]).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.error().message.contains("mapping"));
    let r = api
        .post_multipart("/projects", &[("file", b"a,b\r\n1,2\r\n"), ("mapping", b"{not json")])
        .await;
    assert_eq!(r.error().code, ErrorCode::BadRequest);
    let r = api.post_json("/projects", json!({})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn payload_limit_follows_configuration() {
    let csv = topic_csv(200, 10, false);
    assert!(csv.len() > 4096);
    let small = Api::new(AppState::offline(ServiceConfig {
        max_payload_bytes: 4096,
        ..ServiceConfig::default()
    }));
    let r = small.create_project(&csv, mapping()).await;
    assert_eq!(r.status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(r.error().code, ErrorCode::BadRequest);

    let roomy = Api::new(AppState::offline(ServiceConfig {
        max_payload_bytes: csv.len() * 2,
        ..ServiceConfig::default()
    }));
    assert_eq!(roomy.create_project(&csv, mapping()).await.status, StatusCode::CREATED);
}

#[tokio::test]
async fn a_25_mb_csv_fits_the_default_limit() {
    let filler = "lorem ipsum dolor sit amet ".repeat(18);
    let mut csv = String::from("id,abstract\r\n");
    let mut i = 0;
    while csv.len() < 25 * 1024 * 1024 {
        i += 1;
        csv.push_str(&format!("{i},{filler}{i}\r\n"));
    }
    assert!(ServiceConfig::default().max_payload_bytes > csv.len());
    let r = api()
        .create_project(&csv, json!({ "text_column": "abstract", "id_column": "id" }))
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    assert_eq!(r.json::<ProjectSummary>().n_records, i);
}

#[tokio::test]
async fn queue_before_rerank_is_import_order() {
    let api = api();
    let id = new_project(&api, 10, 3).await;
    let ids = queue_ids(&api, &id, Some(4)).await;
    assert_eq!(ids, vec!["r01", "r02", "r03", "r04"]);
    let all = queue_ids(&api, &id, Some(1000)).await;
    assert_eq!(all.len(), 10);
    assert_eq!(queue_ids(&api, &id, None).await, all);
    label(&api, &id, &[("r02", "exclude")]).await;
    assert_eq!(queue_ids(&api, &id, Some(2)).await, vec!["r01", "r03"]);
}

#[tokio::test]
async fn rerank_needs_three_includes() {
    let api = api();
    let id = new_project(&api, 20, 6).await;
    let s = label(&api, &id, &[("r01", "include"), ("r02", "include")]).await;
    assert!(!s.rerank_permitted);
    let r = api.post_json(&format!("/projects/{id}/rerank"), json!({})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let e = r.error();
    assert_eq!(e.code, ErrorCode::Conflict);
    assert_eq!(e.detail.unwrap()["required"], 3);

    let s = label(&api, &id, &[("r03", "include")]).await;
    assert_eq!(s.n_includes, 3);
    assert!(s.rerank_permitted);
    let r = api
        .post_json(&format!("/projects/{id}/rerank"), json!({ "rng_seed": 1 }))
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json::<RerankResponse>().iteration, 1);
}

#[tokio::test]
async fn queue_after_rerank_is_the_engine_ordering() {
    let api = api();
    let id = new_project(&api, 30, 8).await;
    let labels = [
        ("r01", "include"),
        ("r02", "include"),
        ("r03", "include"),
        ("r20", "exclude"),
    ];
    label(&api, &id, &labels).await;
    let r = api
        .post_json(&format!("/projects/{id}/rerank"), json!({ "rng_seed": 11 }))
        .await;
    let resp: RerankResponse = r.json();
    assert_eq!(resp.rng_seed, 11);

    // the same project built and reranked directly
    let map = ColumnMapping::new("abstract").with_title("title").with_id("id");
    let mut direct = import_csv(topic_csv(30, 8, false).as_bytes(), &map).unwrap();
    for (r, l) in labels {
        direct.apply_label(r, l.parse().unwrap()).unwrap();
    }
    let reranker = Reranker::new(&HashingEmbedder::default(), &direct.records).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let state = reranker
        .rerank_project(&mut direct, &EnsembleConfig::default(), &mut rng, None)
        .unwrap();
    assert_eq!(resp.summary, direct.ranking_history[0]);

    let top = queue_ids(&api, &id, Some(5)).await;
    assert_eq!(top, state.ordering[..5].to_vec());
    let whole = queue_ids(&api, &id, None).await;
    assert_eq!(whole, state.ordering);
    // relevant records float up
    assert!(top.iter().all(|r| r.as_str() <= "r08"));

    // labelling from the queue keeps it a filtered prefix
    label(&api, &id, &[(top[0].as_str(), "include")]).await;
    let filtered: Vec<String> = state.ordering.iter().filter(|r| **r != top[0]).cloned().collect();
    assert_eq!(queue_ids(&api, &id, None).await, filtered);
}

#[tokio::test]
async fn reranks_increment_the_iteration() {
    let api = api();
    let id = new_project(&api, 25, 6).await;
    label(&api, &id, &[("r01", "include"), ("r02", "include"), ("r03", "include")]).await;
    for expected in 1..=5u32 {
        let r: RerankResponse = api
            .post_json(&format!("/projects/{id}/rerank"), json!({ "rng_seed": expected }))
            .await
            .json();
        assert_eq!(r.iteration, expected);
    }
    let s: ProjectSummary = api.get(&format!("/projects/{id}")).await.json();
    assert_eq!(s.iteration, 5);
}

#[tokio::test]
async fn bad_rerank_options_are_400() {
    let api = api();
    let id = new_project(&api, 10, 4).await;
    let r = api
        .post_json(
            &format!("/projects/{id}/rerank"),
            json!({ "ensemble": { "max_seeds": 0 } }),
        )
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = api
        .post_json(&format!("/projects/{id}/rerank"), json!({ "rng_seed": "x" }))
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_rerank_is_busy() {
    let gate = GatedEmbedder::new();
    let api = Arc::new(Api::new(
        AppState::offline(ServiceConfig::default()).with_embedder(gate.clone()),
    ));
    let id = new_project(&api, 20, 5).await;
    label(&api, &id, &[("r01", "include"), ("r02", "include"), ("r03", "include")]).await;

    let first = {
        let api = Arc::clone(&api);
        let id = id.clone();
        tokio::spawn(async move {
            api.post_json(&format!("/projects/{id}/rerank"), json!({ "rng_seed": 3 }))
                .await
        })
    };
    while !gate.entered() {
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    let second = api.post_json(&format!("/projects/{id}/rerank"), json!({})).await;
    assert_eq!(second.status, StatusCode::CONFLICT);
    assert_eq!(second.error().code, ErrorCode::Busy);

    gate.release();
    let first = first.await.unwrap();
    assert_eq!(first.status, StatusCode::OK, "{}", first.text());
    assert_eq!(first.json::<RerankResponse>().iteration, 1);
    let again: RerankResponse = api.post_json(&format!("/projects/{id}/rerank"), json!({})).await.json();
    assert_eq!(again.iteration, 2);
}

#[tokio::test]
async fn unknown_ids_are_404_and_nothing_is_applied() {
    let api = api();
    let id = new_project(&api, 6, 2).await;
    let r = api
        .post_json(
            &format!("/projects/{id}/labels"),
            json!([{ "record_id": "r01", "label": "include" }, { "record_id": "nope", "label": "exclude" }]),
        )
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let e = r.error();
    assert_eq!(e.code, ErrorCode::NotFound);
    assert_eq!(e.detail.unwrap()["record_ids"], json!(["nope"]));
    let s: ProjectSummary = api.get(&format!("/projects/{id}")).await.json();
    assert_eq!((s.n_includes, s.n_label_events), (0, 0));

    assert_eq!(
        api.get("/projects/missing/queue").await.error().code,
        ErrorCode::NotFound
    );
    assert_eq!(api.get("/no/such/route").await.status, StatusCode::NOT_FOUND);
    assert_eq!(api.get("/projects/missing").await.error().code, ErrorCode::NotFound);
    let r = api
        .post_json(
            &format!("/projects/{id}/labels"),
            json!([{ "record_id": "r01", "label": "maybe" }]),
        )
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_label_posts_are_all_applied() {
    let api = Arc::new(api());
    let id = new_project(&api, 40, 10).await;
    let mut handles = Vec::new();
    for i in 1..=40usize {
        let api = Arc::clone(&api);
        let id = id.clone();
        handles.push(tokio::spawn(async move {
            let label = if i % 3 == 0 { "include" } else { "exclude" };
            api.post_json(
                &format!("/projects/{id}/labels"),
                json!([{ "record_id": format!("r{i:02}"), "label": label }]),
            )
            .await
            .status
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::OK);
    }
    let s: ProjectSummary = api.get(&format!("/projects/{id}")).await.json();
    assert_eq!(s.n_label_events, 40);
    assert_eq!(s.n_includes, 13);
    assert_eq!(s.n_excludes, 27);

    // replaying the event log over a fresh import reproduces the labels
    let slot = api.state.project(&id).unwrap();
    let project = slot.project.lock().await;
    let map = ColumnMapping::new("abstract").with_title("title").with_id("id");
    let fresh = import_csv(topic_csv(40, 10, false).as_bytes(), &map).unwrap();
    assert_eq!(replay_labels(&fresh, &project.label_events).unwrap(), project.labels());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn llm_job_counts_match_the_substring_oracle() {
    let provider = StubProvider::from_rules("YES heat pump\nYES fisheries report 7\n").unwrap();
    let api = Api::new(AppState::offline(ServiceConfig::default()).with_provider(Arc::new(provider)));
    let id = new_project(&api, 20, 6).await;
    let r = api
        .post_json(
            &format!("/projects/{id}/llm"),
            json!({ "scene": "You screen energy news.", "criteria": "Relevant if about domestic heating." }),
        )
        .await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
    let job: serde_json::Value = r.json();
    assert_eq!(job["status"], "queued");
    let done = api
        .wait_for(&format!("/projects/{id}/llm/{}", job["job_id"].as_str().unwrap()))
        .await;
    assert_eq!(done["status"], "done");
    assert_eq!(done["history"], json!(["queued", "running", "done"]));

    let csv = topic_csv(20, 6, false);
    let oracle = csv
        .lines()
        .skip(1)
        .filter(|l| {
            let l = l.to_lowercase();
            l.contains("heat pump") || l.contains("fisheries report 7")
        })
        .count();
    assert_eq!(oracle, 7);
    assert_eq!(done["counts"]["n_include_votes"], oracle);
    assert_eq!(done["counts"]["n_exclude_votes"], 20 - oracle);
    assert_eq!(done["counts"]["n_judged"], 20);
    assert_eq!(done["completed"], 20);

    let q: QueueResponse = api.get(&format!("/projects/{id}/queue")).await.json();
    let voted = q.items.iter().filter(|i| i.llm_bit == Some(1)).count();
    assert_eq!(voted, oracle);
}

#[tokio::test]
async fn llm_request_validation() {
    let api = Api::new(
        AppState::offline(ServiceConfig::default()).with_provider(Arc::new(StubProvider::from_rules("").unwrap())),
    );
    let id = new_project(&api, 5, 2).await;
    let r = api
        .post_json(&format!("/projects/{id}/llm"), json!({ "scene": "s" }))
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let e = r.error();
    assert!(e.message.contains("part 2"));
    assert_eq!(e.detail.unwrap()["part"], "criteria");
    let r = api
        .post_json(
            &format!("/projects/{id}/llm"),
            json!({ "scene": "s", "criteria": "   " }),
        )
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(
        api.get(&format!("/projects/{id}/llm/llm-99")).await.status,
        StatusCode::NOT_FOUND
    );

    let none = self::api();
    let id = new_project(&none, 5, 2).await;
    let r = none
        .post_json(&format!("/projects/{id}/llm"), json!({ "scene": "s", "criteria": "c" }))
        .await;
    assert_eq!(r.error().code, ErrorCode::Conflict);
}

#[tokio::test]
async fn mini_report_needs_an_include() {
    let api = api();
    let id = new_project(&api, 10, 3).await;
    let r = api.get(&format!("/projects/{id}/mini-report")).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.error().code, ErrorCode::Conflict);
    label(&api, &id, &[("r05", "exclude")]).await;
    assert_eq!(
        api.get(&format!("/projects/{id}/mini-report")).await.status,
        StatusCode::CONFLICT
    );
    assert_eq!(
        api.get(&format!("/projects/{id}/gain-curve.csv")).await.status,
        StatusCode::CONFLICT
    );
}

#[tokio::test]
async fn fully_labelled_project_report_equals_full_metrics() {
    let api = api();
    let csv = topic_csv(30, 7, true);
    let map = json!({
        "text_column": "abstract", "title_column": "title", "id_column": "id",
        "label_column": "decision", "positive_value": "Include"
    });
    let s: ProjectSummary = api.create_project(&csv, map).await.json();
    let id = s.project_id;
    let r = api.get(&format!("/projects/{id}/mini-report")).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(
        r.headers["link"].to_str().unwrap(),
        format!("</projects/{id}/gain-curve.csv>; rel=\"gain-curve\"; type=\"text/csv\"")
    );
    let v: serde_json::Value = r.json();
    let gold = Trajectory::from_flags(&(0..30).map(|i| i < 7).collect::<Vec<_>>());
    let full = compute_metrics(&gold).unwrap();
    assert_eq!(v["metrics"], serde_json::to_value(&full).unwrap());
    assert_eq!(v["wss95"], json!(full.wss95));
    assert_eq!(v["notice"], "based on partially screened data");

    // same bytes as the library renders for the stored project
    let slot = api.state.project(&id).unwrap();
    let expected = project_report_json(&*slot.project.lock().await).unwrap();
    assert_eq!(r.body, expected);

    let curve = api.get(&format!("/projects/{id}/gain-curve.csv")).await;
    assert_eq!(curve.status, StatusCode::OK);
    let text = curve.text();
    assert!(text.starts_with("screened,fraction_screened,recall,baseline\r\n"));
    assert_eq!(text.lines().count() - 1, 30);
}

#[tokio::test]
async fn exports_do_not_change_project_state() {
    let api = api();
    let id = new_project(&api, 15, 5).await;
    label(
        &api,
        &id,
        &[
            ("r01", "include"),
            ("r02", "include"),
            ("r03", "include"),
            ("r10", "exclude"),
        ],
    )
    .await;
    api.post_json(&format!("/projects/{id}/rerank"), json!({ "rng_seed": 5 }))
        .await;
    let before = state_hash(&api, &id).await;

    let csv = api.get(&format!("/projects/{id}/export?format=csv")).await;
    assert_eq!(csv.status, StatusCode::OK);
    assert!(csv
        .text()
        .lines()
        .next()
        .unwrap()
        .ends_with("hs_record_id,hs_label,hs_label_source,hs_score"));
    assert_eq!(csv.text().lines().count(), 16);
    let ris = api.get(&format!("/projects/{id}/export?format=ris")).await;
    assert_eq!(ris.status, StatusCode::OK);
    assert_eq!(ris.text().matches("ER  - ").count(), 15);
    assert_eq!(api.get(&format!("/projects/{id}/export")).await.body, csv.body);
    api.get(&format!("/projects/{id}/mini-report")).await;
    api.get(&format!("/projects/{id}/gain-curve.csv")).await;
    api.get(&format!("/projects/{id}/queue?limit=3")).await;
    assert_eq!(state_hash(&api, &id).await, before);

    assert_eq!(
        api.get(&format!("/projects/{id}/export?format=xlsx"))
            .await
            .error()
            .code,
        ErrorCode::BadRequest
    );
    let map = ColumnMapping::new("abstract").with_title("title").with_id("id");
    let reimported = import_csv(&csv.body, &map).unwrap();
    assert_eq!(reimported.count(Label::Include), 3);
}
