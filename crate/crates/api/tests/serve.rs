mod common;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use common::*;
use econkg_api::{bind, load_state, serve_with, AppState, ServeConfig, ServiceOptions, StartupError};
use tokio::io::{AsyncReadExt, AsyncWriteExt};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn serve_config(dir: &std::path::Path) -> ServeConfig {
    ServeConfig {
        addr: "127.0.0.1:0".parse().unwrap(),
        corpus: fixtures().join("golden_corpus.jsonl"),
        variables: fixtures().join("golden_variables.csv"),
        relations: fixtures().join("golden_relations.csv"),
        data_dir: dir.to_path_buf(),
        embeddings: None,
        dim: 64,
        options: ServiceOptions::default(),
    }
}

async fn raw_get(addr: SocketAddr, path: &str) -> String {
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let request = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    stream.write_all(request.as_bytes()).await.unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).await.unwrap();
    out
}

#[tokio::test]
async fn serves_over_tcp_and_shuts_down() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(load_state(&serve_config(dir.path())).unwrap());
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_with(listener, state, async {
        let _ = rx.await;
    }));
    let reply = raw_get(addr, "/api/health").await;
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.ends_with(r#"{"status":"ok"}"#), "{reply}");
    let reply = raw_get(addr, "/api/graph?center=inflation").await;
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("\"inflation\""), "{reply}");
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[tokio::test]
async fn startup_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = serve_config(dir.path());
    config.corpus = dir.path().join("missing.jsonl");
    match load_state(&config) {
        Err(StartupError::Artifact { path, .. }) => assert_eq!(path, config.corpus),
        other => panic!("expected artifact error, got {:?}", other.err()),
    }
    let taken = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = taken.local_addr().unwrap();
    assert!(matches!(bind(addr).await, Err(StartupError::Bind { .. })));

    // A corrupt session log refuses to load rather than dropping state.
    std::fs::create_dir_all(dir.path().join("sessions")).unwrap();
    std::fs::write(dir.path().join("sessions/s0001.jsonl"), "{\"event\":\"advanced\"}\n").unwrap();
    let (corpus, seeds) = golden();
    assert!(matches!(
        AppState::open(corpus, seeds, ServiceOptions::default(), dir.path()),
        Err(StartupError::Restore(_))
    ));
}
