mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::*;
use econkg::bootstrap::BootstrapConfig;
use econkg_api::AppState;
use proptest::prelude::*;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
enum Op {
    Create,
    Candidates(usize),
    Iterate(usize),
    AcceptFirst(usize),
    RejectAll(usize),
    Stale(usize),
    Replay(usize),
    Restart,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => Just(Op::Create),
        3 => (0..3usize).prop_map(Op::Candidates),
        2 => (0..3usize).prop_map(Op::Iterate),
        3 => (0..3usize).prop_map(Op::AcceptFirst),
        3 => (0..3usize).prop_map(Op::RejectAll),
        1 => (0..3usize).prop_map(Op::Stale),
        1 => (0..3usize).prop_map(Op::Replay),
        1 => Just(Op::Restart),
    ]
}

fn config() -> BootstrapConfig {
    BootstrapConfig {
        k: 4,
        max_iterations: 2,
        ..Default::default()
    }
}

fn labels_for(batch: &Value, accept_first: bool) -> String {
    let kind = batch["kind"].clone();
    let ds: Vec<Value> = batch["items"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let mut d = json!({"candidate": item["text"], "kind": kind, "decision": "reject"});
            if i == 0 && accept_first {
                d["decision"] = json!("accept");
                if kind == "relation" {
                    d["polarity"] = json!("increase");
                }
            }
            d
        })
        .collect();
    json!({"batch_id": batch["id"], "decisions": ds}).to_string()
}

struct Harness {
    dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: axum::Router,
    ids: Vec<String>,
    /// Last successful labels request per session: (key, body, response).
    last: Vec<Option<(String, String, String)>>,
    keys: usize,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let state = Self::open(&dir);
        let app = app(&state);
        Self {
            dir,
            state,
            app,
            ids: Vec::new(),
            last: Vec::new(),
            keys: 0,
        }
    }

    fn open(dir: &tempfile::TempDir) -> Arc<AppState> {
        let (corpus, seeds) = fixture(21, 40);
        Arc::new(AppState::open(corpus, seeds, options(config()), dir.path()).unwrap())
    }

    fn restart(&mut self) {
        self.state = Self::open(&self.dir);
        self.app = app(&self.state);
    }

    async fn view(&self, id: &str) -> Value {
        let r = send(&self.app, "GET", &format!("/api/session/{id}"), None, None).await;
        assert_eq!(r.status, StatusCode::OK);
        r.json()
    }
}

fn allowed(before: &str, after: &str) -> bool {
    before == after
        || matches!(
            (before, after),
            ("idle", "awaiting_labels")
                | ("idle", "converged")
                | ("awaiting_labels", "converged")
                | ("iterating", "awaiting_labels")
                | ("iterating", "converged")
        )
}

async fn check(mut ops: Vec<Op>) -> Result<(), TestCaseError> {
    ops.insert(0, Op::Create);
    let mut h = Harness::new();
    for op in ops {
        let pick = |i: usize, h: &Harness| h.ids.get(i % h.ids.len().max(1)).cloned();
        let target = match &op {
            Op::Create | Op::Restart => None,
            Op::Candidates(i) | Op::Iterate(i) | Op::AcceptFirst(i) | Op::RejectAll(i) | Op::Stale(i) | Op::Replay(i) => {
                match pick(*i, &h) {
                    Some(id) => Some(id),
                    None => continue,
                }
            }
        };
        let before = match &target {
            Some(id) => Some(h.view(id).await),
            None => None,
        };
        let state_before = before.as_ref().map(|v| v["state"].as_str().unwrap().to_string());
        let mut expect_unchanged = false;
        match &op {
            Op::Create => {
                let id = create(&h.app).await;
                prop_assert_eq!(h.view(&id).await["state"].clone(), json!("idle"));
                h.ids.push(id);
                h.last.push(None);
            }
            Op::Restart => {
                let mut views = Vec::new();
                for id in &h.ids {
                    views.push(h.view(id).await);
                }
                h.restart();
                for (id, v) in h.ids.iter().zip(&views) {
                    prop_assert_eq!(&h.view(id).await, v);
                }
            }
            Op::Candidates(_) => {
                let id = target.as_ref().unwrap();
                let r = send(&h.app, "GET", &format!("/api/session/{id}/candidates"), None, None).await;
                prop_assert_eq!(r.status, StatusCode::OK);
                let s = r.json()["session"]["state"].clone();
                prop_assert!(s == "awaiting_labels" || s == "converged");
                if state_before.as_deref() == Some("awaiting_labels") || state_before.as_deref() == Some("converged") {
                    expect_unchanged = true;
                }
            }
            Op::Iterate(_) => {
                let id = target.as_ref().unwrap();
                let r = send(&h.app, "POST", &format!("/api/session/{id}/iterate"), None, None).await;
                match state_before.as_deref().unwrap() {
                    "idle" | "iterating" => prop_assert_eq!(r.status, StatusCode::OK),
                    _ => {
                        prop_assert_eq!(r.status, StatusCode::CONFLICT);
                        expect_unchanged = true;
                    }
                }
            }
            Op::AcceptFirst(_) | Op::RejectAll(_) => {
                let id = target.as_ref().unwrap();
                let idx = h.ids.iter().position(|x| x == id).unwrap();
                let v = before.as_ref().unwrap();
                let uri = format!("/api/session/{id}/labels");
                if v["state"] == "awaiting_labels" {
                    let batch = send(&h.app, "GET", &format!("/api/session/{id}/candidates"), None, None).await.json()["batch"].clone();
                    let body = labels_for(&batch, matches!(op, Op::AcceptFirst(_)));
                    h.keys += 1;
                    let key = format!("key-{}", h.keys);
                    let r = send(&h.app, "POST", &uri, Some(&body), Some(&key)).await;
                    prop_assert_eq!(r.status, StatusCode::OK, "{}", r.text);
                    h.last[idx] = Some((key, body, r.text));
                } else {
                    let body = json!({"batch_id": "b0001", "decisions": []}).to_string();
                    let r = send(&h.app, "POST", &uri, Some(&body), None).await;
                    prop_assert_eq!(r.status, StatusCode::CONFLICT);
                    expect_unchanged = true;
                }
            }
            Op::Stale(_) => {
                let id = target.as_ref().unwrap();
                let body = json!({"batch_id": "never-issued", "decisions": []}).to_string();
                let r = send(&h.app, "POST", &format!("/api/session/{id}/labels"), Some(&body), None).await;
                prop_assert_eq!(r.status, StatusCode::CONFLICT);
                expect_unchanged = true;
            }
            Op::Replay(_) => {
                let id = target.as_ref().unwrap();
                let idx = h.ids.iter().position(|x| x == id).unwrap();
                if let Some((key, body, text)) = h.last[idx].clone() {
                    let r = send(&h.app, "POST", &format!("/api/session/{id}/labels"), Some(&body), Some(&key)).await;
                    prop_assert_eq!(r.status, StatusCode::OK);
                    prop_assert_eq!(r.text, text);
                }
                expect_unchanged = true;
            }
        }
        if let (Some(id), Some(before)) = (&target, &before) {
            let after = h.view(id).await;
            let (b, a) = (before["state"].as_str().unwrap(), after["state"].as_str().unwrap());
            prop_assert!(allowed(b, a), "{:?}: {} -> {}", op, b, a);
            prop_assert_eq!(a == "awaiting_labels", !after["open_batch"].is_null());
            prop_assert!(after["iteration"].as_u64() >= before["iteration"].as_u64());
            if expect_unchanged {
                prop_assert_eq!(&after, before, "{:?}", op);
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn random_request_sequences_keep_sessions_consistent(ops in prop::collection::vec(op(), 1..16)) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(check(ops))?;
    }
}
