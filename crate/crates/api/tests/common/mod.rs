#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use econkg::bootstrap::planted::planted_corpus;
use econkg::bootstrap::BootstrapConfig;
use econkg::corpus::{Corpus, IngestFormat};
use econkg::lexicon::Lexicon;
use econkg_api::{router, AppState, ServiceOptions};
use serde_json::Value;
use tower::ServiceExt;

pub const TOKEN: &str = "secret";

pub fn small_config() -> BootstrapConfig {
    BootstrapConfig {
        k: 6,
        max_iterations: 3,
        ..Default::default()
    }
}

pub fn fixture(seed: u64, sentences: usize) -> (Arc<Corpus>, Lexicon) {
    let p = planted_corpus(seed, sentences);
    (Arc::new(p.corpus), p.seeds)
}

pub fn golden() -> (Arc<Corpus>, Lexicon) {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let corpus = Corpus::read_jsonl(&dir.join("golden_corpus.jsonl"), IngestFormat::Auto).unwrap();
    let lexicon = Lexicon::load_seed_lexicons(&dir.join("golden_variables.csv"), &dir.join("golden_relations.csv")).unwrap();
    (Arc::new(corpus), lexicon)
}

pub fn options(config: BootstrapConfig) -> ServiceOptions {
    ServiceOptions {
        token: Some(TOKEN.into()),
        bootstrap: config,
        ..Default::default()
    }
}

pub fn app(state: &Arc<AppState>) -> Router {
    router(state.clone())
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text))
    }
}

pub async fn send(app: &Router, method: &str, uri: &str, body: Option<&str>, key: Option<&str>) -> Reply {
    let mut req = Request::builder()
        .method(method)
        .uri(uri)
        .header("authorization", format!("Bearer {TOKEN}"));
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    let req = req
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let content_type = res
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    Reply {
        status,
        content_type,
        text: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

pub async fn create(app: &Router) -> String {
    let r = send(app, "POST", "/api/session", None, None).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    r.json()["session"]["id"].as_str().unwrap().to_string()
}
