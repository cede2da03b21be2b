#![allow(dead_code)]

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use horizon_core::embedding::{Embedder, EmbeddingError, HashingEmbedder};
use horizon_service::{router, ApiError, AppState};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use tower::ServiceExt;

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json<T: DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn error(&self) -> ApiError {
        assert!(!self.status.is_success(), "expected an error, got {}", self.status);
        self.json()
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub struct Api {
    pub state: Arc<AppState>,
    app: Router,
}

impl Api {
    pub fn new(state: AppState) -> Self {
        let state = Arc::new(state);
        Self {
            app: router(Arc::clone(&state)),
            state,
        }
    }

    pub async fn send(&self, request: Request<Body>) -> Reply {
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let headers = response.headers().clone();
        let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, headers, body }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn post_json(&self, uri: &str, body: serde_json::Value) -> Reply {
        self.send(
            Request::post(uri)
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await
    }

    pub async fn post_multipart(&self, uri: &str, parts: &[(&str, &[u8])]) -> Reply {
        let (content_type, body) = multipart(parts);
        self.send(
            Request::post(uri)
                .header("content-type", content_type)
                .body(Body::from(body))
                .unwrap(),
        )
        .await
    }

    pub async fn create_project(&self, csv: &str, mapping: serde_json::Value) -> Reply {
        let mapping = mapping.to_string();
        self.post_multipart(
            "/projects",
            &[("file", csv.as_bytes()), ("mapping", mapping.as_bytes())],
        )
        .await
    }

    /// Poll a job URL until its status is terminal.
    pub async fn wait_for(&self, uri: &str) -> serde_json::Value {
        for _ in 0..2000 {
            let v: serde_json::Value = self.get(uri).await.json();
            if v["status"] == "done" || v["status"] == "failed" {
                return v;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("{uri} never finished");
    }
}

const BOUNDARY: &str = "horizon-test-boundary-7d1f";

pub fn multipart(parts: &[(&str, &[u8])]) -> (String, Vec<u8>) {
    let mut body = Vec::new();
    for (name, data) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        body.extend_from_slice(
            format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n").as_bytes(),
        );
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={BOUNDARY}"), body)
}

/// Small two-topic reference set: ids r01…rNN, the first `n_rel` mention
/// heat pumps, the rest are about unrelated topics.
pub fn topic_csv(n: usize, n_rel: usize, with_labels: bool) -> String {
    let mut csv = String::from(if with_labels {
        "id,title,abstract,decision\r\n"
    } else {
        "id,title,abstract\r\n"
    });
    for i in 0..n {
        let (title, text) = if i < n_rel {
            (
                format!("Heat pump uptake study {i}"),
                format!("heat pump installation grants household heating retrofit survey {i}"),
            )
        } else {
            (
                format!("Fisheries report {i}"),
                format!("coastal fisheries quota vessel catch harbour landings bulletin {i}"),
            )
        };
        csv.push_str(&format!("r{:02},{title},{text}", i + 1));
        if with_labels {
            csv.push_str(if i < n_rel { ",Include" } else { ",Exclude" });
        }
        csv.push_str("\r\n");
    }
    csv
}

pub fn mapping() -> serde_json::Value {
    serde_json::json!({ "text_column": "abstract", "title_column": "title", "id_column": "id" })
}

/// Embedder that blocks inside `embed_batch` until released, to hold a
/// rerank open.
pub struct GatedEmbedder {
    inner: HashingEmbedder,
    state: Mutex<(bool, bool)>,
    cv: Condvar,
}

impl GatedEmbedder {
    pub fn new() -> Arc<Self> {
        Arc::new(Self {
            inner: HashingEmbedder::default(),
            state: Mutex::new((false, false)),
            cv: Condvar::new(),
        })
    }

    pub fn entered(&self) -> bool {
        self.state.lock().unwrap().0
    }

    pub fn release(&self) {
        self.state.lock().unwrap().1 = true;
        self.cv.notify_all();
    }
}

impl Embedder for GatedEmbedder {
    fn name(&self) -> &str {
        "gated"
    }
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn deterministic(&self) -> bool {
        true
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut s = self.state.lock().unwrap();
        s.0 = true;
        while !s.1 {
            s = self.cv.wait(s).unwrap();
        }
        drop(s);
        self.inner.embed_batch(texts)
    }
}
