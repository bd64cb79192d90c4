//! JSON-over-HTTP curation service: bootstrap sessions, label
//! submission, graph preview and duplicate confirmation.

pub mod session;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use econkg::bootstrap::{BootstrapConfig, LabelDecision, LogRecord};
use econkg::coref::{merge_entities, propose_duplicates, CanonicalMap, EmbeddingSource, MergeDecision, DEFAULT_TAU};
use econkg::corpus::{Corpus, IngestFormat};
use econkg::hashing::Fnv;
use econkg::kgraph::{build_graph, GraphError, KnowledgeGraph};
use econkg::lexicon::Lexicon;
use econkg::text::entity_key;
use econkg::triples::{dedup_triples, TripleExtractor};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use session::{Cached, Event, Session, SessionState, SessionView};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: String) -> Self {
        Self {
            status,
            code,
            message,
            field: None,
        }
    }

    pub fn bad_request(code: &'static str, message: String, field: Option<String>) -> Self {
        Self {
            field,
            ..Self::new(StatusCode::BAD_REQUEST, code, message)
        }
    }

    pub fn conflict(code: &'static str, message: String) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &'static str, message: String) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn not_found(message: String) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: String) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.status.as_u16(), self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(field) = self.field {
            error["field"] = Value::String(field);
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("restoring state: {0}")]
    Restore(ApiError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Expected `Authorization: Bearer` token; `None` disables the check.
    pub token: Option<String>,
    pub bootstrap: BootstrapConfig,
    pub embeddings: EmbeddingSource,
    pub tau: f64,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            token: None,
            bootstrap: BootstrapConfig::default(),
            embeddings: EmbeddingSource::hashing_only(64),
            tau: DEFAULT_TAU,
        }
    }
}

fn replay(c: &Cached) -> Response {
    let status = StatusCode::from_u16(c.status).unwrap_or(StatusCode::OK);
    (status, Json(c.body.clone())).into_response()
}

#[derive(Default)]
struct Creation {
    next: usize,
    keys: HashMap<String, (u64, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorefEvent {
    decisions: Vec<MergeDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<String>,
    #[serde(default)]
    fingerprint: u64,
    #[serde(default)]
    body: Value,
}

#[derive(Default)]
struct CorefStore {
    decisions: Vec<MergeDecision>,
    map: CanonicalMap,
    responses: HashMap<String, Cached>,
    log: Option<File>,
}

pub struct AppState {
    corpus: Arc<Corpus>,
    seed: Lexicon,
    options: ServiceOptions,
    dir: Option<PathBuf>,
    frequencies: HashMap<String, u64>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    creation: Mutex<Creation>,
    coref: Mutex<CorefStore>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn session_number(id: &str) -> Option<usize> {
    id.strip_prefix('s')?.parse().ok()
}

/// Preview graph for a lexicon, with confirmed merges applied.
pub fn preview_graph(corpus: &Corpus, lexicon: &Lexicon, merges: &CanonicalMap, centers: &[String]) -> KnowledgeGraph {
    let map = CanonicalMap::from_lexicon(lexicon).then(merges);
    let triples = TripleExtractor::new(lexicon)
        .with_coreference(map.clone())
        .extract_corpus(corpus);
    build_graph(&dedup_triples(&triples, &map), centers)
}

/// Mention counts of graph entities under `lexicon`, used to pick
/// canonical names for merged components.
pub fn entity_frequencies(corpus: &Corpus, lexicon: &Lexicon) -> HashMap<String, u64> {
    preview_graph(corpus, lexicon, &CanonicalMap::identity(), &[])
        .nodes()
        .map(|n| (n.name.clone(), n.frequency))
        .collect()
}

impl AppState {
    /// State kept in memory only.
    pub fn ephemeral(corpus: Arc<Corpus>, seed: Lexicon, options: ServiceOptions) -> Self {
        let frequencies = entity_frequencies(&corpus, &seed);
        Self {
            corpus,
            seed,
            options,
            dir: None,
            frequencies,
            sessions: RwLock::new(BTreeMap::new()),
            creation: Mutex::new(Creation {
                next: 1,
                keys: HashMap::new(),
            }),
            coref: Mutex::new(CorefStore::default()),
        }
    }

    /// State persisted under `dir`; existing logs are replayed.
    pub fn open(corpus: Arc<Corpus>, seed: Lexicon, options: ServiceOptions, dir: &Path) -> Result<Self, StartupError> {
        let mut state = Self::ephemeral(corpus, seed, options);
        let sessions_dir = dir.join("sessions");
        std::fs::create_dir_all(&sessions_dir)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&sessions_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        {
            let sessions = state.sessions.get_mut().unwrap_or_else(|p| p.into_inner());
            let creation = state.creation.get_mut().unwrap_or_else(|p| p.into_inner());
            for path in paths {
                let (s, key) = session::restore(&path, state.corpus.clone(), &state.seed).map_err(StartupError::Restore)?;
                if let Some(n) = session_number(s.id()) {
                    creation.next = creation.next.max(n + 1);
                }
                if let Some(key) = key {
                    if let Some(c) = s.cached(&key) {
                        creation.keys.insert(key, (c.fingerprint, s.id().to_string()));
                    }
                }
                sessions.insert(s.id().to_string(), Arc::new(Mutex::new(s)));
            }
        }
        let coref_path = dir.join("coref.jsonl");
        let store = state.coref.get_mut().unwrap_or_else(|p| p.into_inner());
        if coref_path.exists() {
            let reader = BufReader::new(File::open(&coref_path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: CorefEvent = serde_json::from_str(&line).map_err(|e| StartupError::Artifact {
                    path: coref_path.clone(),
                    message: format!("line {}: {e}", i + 1),
                })?;
                store.decisions.extend(event.decisions);
                if let Some(key) = event.key {
                    store.responses.insert(
                        key,
                        Cached {
                            fingerprint: event.fingerprint,
                            status: 200,
                            body: event.body,
                        },
                    );
                }
            }
            store.map = merge_entities(&store.decisions, &state.frequencies).map_err(|e| StartupError::Artifact {
                path: coref_path.clone(),
                message: e.to_string(),
            })?;
        }
        store.log = Some(session::open_log(&coref_path).map_err(StartupError::Restore)?);
        state.dir = Some(dir.to_path_buf());
        Ok(state)
    }

    pub fn options(&self) -> &ServiceOptions {
        &self.options
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }

    pub fn session_view(&self, id: &str) -> Option<SessionView> {
        let s = self.session(id).ok()?;
        let view = lock(&s).view();
        Some(view)
    }

    pub fn session_lexicon(&self, id: &str) -> Option<Lexicon> {
        let s = self.session(id).ok()?;
        let lex = lock(&s).lexicon().clone();
        Some(lex)
    }

    pub fn session_log(&self, id: &str) -> Option<Vec<LogRecord>> {
        let s = self.session(id).ok()?;
        let log = lock(&s).run().log().to_vec();
        Some(log)
    }

    /// Creates a session without going through HTTP; returns its id.
    pub fn new_session(&self, config: BootstrapConfig) -> Result<String, ApiError> {
        config
            .validate()
            .map_err(|e| ApiError::bad_request("invalid_config", e.to_string(), Some("config".into())))?;
        Ok(self.create_session(config, None, 0)?.0)
    }

    pub fn merges(&self) -> CanonicalMap {
        lock(&self.coref).map.clone()
    }

    fn create_session(&self, config: BootstrapConfig, key: Option<String>, fingerprint: u64) -> Result<(String, Response), ApiError> {
        let mut creation = lock(&self.creation);
        if let Some(key) = &key {
            if let Some((fp, id)) = creation.keys.get(key) {
                if *fp != fingerprint {
                    return Err(key_reused());
                }
                let s = self.session(id)?;
                let guard = lock(&s);
                let cached = guard.cached(key).ok_or_else(|| ApiError::internal("missing cached response".into()))?;
                return Ok((id.clone(), replay(cached)));
            }
        }
        let id = format!("s{:04}", creation.next);
        let mut s = Session::new(&id, self.corpus.clone(), self.seed.clone(), config.clone())?;
        if let Some(dir) = &self.dir {
            let path = session::session_log_path(&dir.join("sessions"), &id);
            s.attach_log(session::open_log(&path)?);
        }
        s.persist(&Event::Created {
            id: id.clone(),
            config,
            key: key.clone(),
        })?;
        let body = json!({ "session": s.view() });
        if let Some(key) = key {
            let cached = Cached {
                fingerprint,
                status: 201,
                body: body.clone(),
            };
            s.persist(&Event::Responded {
                key: key.clone(),
                fingerprint,
                status: 201,
                body: body.clone(),
            })?;
            s.remember(&key, cached);
            creation.keys.insert(key, (fingerprint, id.clone()));
        }
        creation.next += 1;
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(Mutex::new(s)));
        Ok((id, (StatusCode::CREATED, Json(body)).into_response()))
    }
}

fn key_reused() -> ApiError {
    ApiError::unprocessable(
        "idempotency_key_reused",
        "idempotency key was already used with a different request".into(),
    )
}

fn fingerprint(route: &str, body: &[u8]) -> u64 {
    Fnv::default().write(route.as_bytes()).write(&[0]).write(body).finish()
}

fn idempotency_key(headers: &HeaderMap) -> Result<Option<String>, ApiError> {
    match headers.get(IDEMPOTENCY_HEADER) {
        None => Ok(None),
        Some(v) => match v.to_str() {
            Ok(s) if !s.is_empty() && s.len() <= 200 => Ok(Some(s.to_string())),
            _ => Err(ApiError::bad_request(
                "bad_idempotency_key",
                "idempotency key must be 1 to 200 visible ASCII characters".into(),
                None,
            )),
        },
    }
}

/// Parses a JSON body, reporting the path of the offending field.
fn parse_body<T: DeserializeOwned + Default>(body: &[u8]) -> Result<T, ApiError> {
    if body.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(T::default());
    }
    let mut de = serde_json::Deserializer::from_slice(body);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        ApiError::bad_request("malformed_body", e.inner().to_string(), field)
    })?;
    de.end()
        .map_err(|e| ApiError::bad_request("malformed_body", e.to_string(), None))?;
    Ok(value)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

/// Runs `op` under the session lock, replaying or recording the response
/// when the request carries an idempotency key.
async fn mutate_session<F>(state: Arc<AppState>, id: String, key: Option<String>, fingerprint: u64, op: F) -> Result<Response, ApiError>
where
    F: FnOnce(&mut Session) -> Result<Value, ApiError> + Send + 'static,
{
    let s = state.session(&id)?;
    blocking(move || {
        let mut session = lock(&s);
        if let Some(key) = &key {
            if let Some(c) = session.cached(key) {
                if c.fingerprint != fingerprint {
                    return Err(key_reused());
                }
                return Ok(replay(c));
            }
        }
        let body = op(&mut session)?;
        if let Some(key) = key {
            session.persist(&Event::Responded {
                key: key.clone(),
                fingerprint,
                status: 200,
                body: body.clone(),
            })?;
            session.remember(
                &key,
                Cached {
                    fingerprint,
                    status: 200,
                    body: body.clone(),
                },
            );
        }
        Ok(Json(body).into_response())
    })
    .await
}

fn advance(session: &mut Session) -> Result<(), ApiError> {
    session.advance()?;
    session.persist(&Event::Advanced)
}

fn session_and_batch(session: &Session) -> Value {
    json!({ "session": session.view(), "batch": session.batch() })
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    config: Option<BootstrapConfig>,
}

async fn create_session(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let key = idempotency_key(&headers)?;
    let request: CreateRequest = parse_body(&body)?;
    let config = request.config.unwrap_or_else(|| state.options.bootstrap.clone());
    config
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_config", e.to_string(), Some("config".into())))?;
    let fp = fingerprint("create", &body);
    blocking(move || state.create_session(config, key, fp).map(|(_, r)| r)).await
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    let s = state.session(&id)?;
    let view = lock(&s).view();
    Ok(Json(view))
}

/// Computes the next batch on demand when none is open.
async fn candidates(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    blocking(move || {
        let mut session = lock(&s);
        if matches!(session.state(), SessionState::Idle | SessionState::Iterating) {
            advance(&mut session)?;
        }
        Ok(Json(session_and_batch(&session)))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelsRequest {
    batch_id: String,
    decisions: Vec<LabelDecision>,
}

async fn labels(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let key = idempotency_key(&headers)?;
    if body.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(ApiError::bad_request("malformed_body", "request body is empty".into(), None));
    }
    let request: LabelsRequest = parse_body(&body)?;
    let fp = fingerprint(&format!("labels/{id}"), &body);
    mutate_session(state, id, key, fp, move |session| {
        let summary = session.label(&request.batch_id, &request.decisions)?;
        session.persist(&Event::Labeled {
            batch_id: request.batch_id,
            decisions: request.decisions,
        })?;
        advance(session)?;
        let mut body = session_and_batch(session);
        body["summary"] = serde_json::to_value(summary).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(body)
    })
    .await
}

async fn iterate(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let key = idempotency_key(&headers)?;
    let fp = fingerprint(&format!("iterate/{id}"), &body);
    mutate_session(state, id, key, fp, |session| {
        advance(session)?;
        Ok(session_and_batch(session))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct GraphQuery {
    center: Option<String>,
    #[serde(default = "default_hops")]
    hops: usize,
    session: Option<String>,
    #[serde(default)]
    format: GraphFormat,
}

fn default_hops() -> usize {
    1
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GraphFormat {
    #[default]
    Json,
    Dot,
}

fn lexicon_for(state: &AppState, session: Option<&str>) -> Result<Lexicon, ApiError> {
    match session {
        Some(id) => {
            let s = state.session(id)?;
            let lex = lock(&s).lexicon().clone();
            Ok(lex)
        }
        None => Ok(state.seed.clone()),
    }
}

fn graph_error(e: GraphError) -> ApiError {
    match e {
        GraphError::UnknownEntity(_) => ApiError::not_found(e.to_string()),
        other => ApiError::internal(other.to_string()),
    }
}

async fn graph(State(state): State<Arc<AppState>>, Query(q): Query<GraphQuery>) -> Result<Response, ApiError> {
    let lexicon = lexicon_for(&state, q.session.as_deref())?;
    let merges = state.merges();
    blocking(move || {
        let centers: Vec<String> = q.center.iter().map(|c| entity_key(c)).collect();
        if let Some(c) = &q.center {
            if lexicon.find_variable(c).is_none() && !preview_graph(&state.corpus, &lexicon, &merges, &[]).contains(&entity_key(c)) {
                return Err(graph_error(GraphError::UnknownEntity(c.clone())));
            }
        }
        let mut g = preview_graph(&state.corpus, &lexicon, &merges, &centers);
        if let Some(center) = centers.first() {
            g = g.subgraph_around(center, q.hops).map_err(graph_error)?;
        }
        Ok(match q.format {
            GraphFormat::Json => {
                let value: Value = serde_json::from_str(&g.to_json()).map_err(|e| ApiError::internal(e.to_string()))?;
                Json(value).into_response()
            }
            GraphFormat::Dot => ([(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")], g.to_dot()).into_response(),
        })
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ProposalQuery {
    tau: Option<f64>,
    session: Option<String>,
}

/// Pair key independent of order.
fn pair(a: &str, b: &str) -> (String, String) {
    let (a, b) = (entity_key(a), entity_key(b));
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

async fn proposals(State(state): State<Arc<AppState>>, Query(q): Query<ProposalQuery>) -> Result<Json<Value>, ApiError> {
    let lexicon = lexicon_for(&state, q.session.as_deref())?;
    let tau = q.tau.unwrap_or(state.options.tau);
    let (merges, decided): (CanonicalMap, Vec<(String, String)>) = {
        let store = lock(&state.coref);
        (store.map.clone(), store.decisions.iter().map(|d| pair(&d.a, &d.b)).collect())
    };
    blocking(move || {
        let g = preview_graph(&state.corpus, &lexicon, &merges, &[]);
        let names: Vec<String> = g.nodes().map(|n| n.name.clone()).collect();
        let found = propose_duplicates(&names, &state.options.embeddings, &lexicon.alias_pairs(), tau)
            .map_err(|e| ApiError::bad_request("invalid_query", e.to_string(), Some("tau".into())))?;
        let open: Vec<_> = found.into_iter().filter(|p| !decided.contains(&pair(&p.a, &p.b))).collect();
        Ok(Json(json!({ "tau": tau, "proposals": open })))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionsRequest {
    decisions: Vec<MergeDecision>,
}

async fn coref_decisions(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let key = idempotency_key(&headers)?;
    if body.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(ApiError::bad_request("malformed_body", "request body is empty".into(), None));
    }
    let request: DecisionsRequest = parse_body(&body)?;
    let fp = fingerprint("coref", &body);
    blocking(move || {
        let mut store = lock(&state.coref);
        if let Some(key) = &key {
            if let Some(c) = store.responses.get(key) {
                if c.fingerprint != fp {
                    return Err(key_reused());
                }
                return Ok(replay(c));
            }
        }
        let mut all = store.decisions.clone();
        all.extend(request.decisions.iter().cloned());
        let map = merge_entities(&all, &state.frequencies).map_err(|e| ApiError::unprocessable("merge_conflict", e.to_string()))?;
        let body = json!({ "decisions": all.len(), "canonical": map.entries() });
        if let Some(f) = store.log.as_mut() {
            let event = CorefEvent {
                decisions: request.decisions,
                key: key.clone(),
                fingerprint: fp,
                body: body.clone(),
            };
            let mut line = serde_json::to_vec(&event).map_err(|e| ApiError::internal(e.to_string()))?;
            line.push(b'\n');
            f.write_all(&line)
                .and_then(|_| f.sync_data())
                .map_err(|e| ApiError::internal(format!("coref log: {e}")))?;
        }
        store.decisions = all;
        store.map = map;
        if let Some(key) = key {
            store.responses.insert(
                key,
                Cached {
                    fingerprint: fp,
                    status: 200,
                    body: body.clone(),
                },
            );
        }
        Ok(Json(body).into_response())
    })
    .await
}

async fn authorize(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.options.token {
        let given = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token".into())
                .into_response();
        }
    }
    next.run(request).await
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint".into())
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(get_session))
        .route("/api/session/{id}/candidates", get(candidates))
        .route("/api/session/{id}/labels", post(labels))
        .route("/api/session/{id}/iterate", post(iterate))
        .route("/api/graph", get(graph))
        .route("/api/coref/proposals", get(proposals))
        .route("/api/coref/decisions", post(coref_decisions))
        .route_layer(middleware::from_fn_with_state(state.clone(), authorize));
    Router::new()
        .route("/api/health", get(health))
        .merge(protected)
        .fallback(fallback)
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub corpus: PathBuf,
    pub variables: PathBuf,
    pub relations: PathBuf,
    pub data_dir: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub dim: usize,
    pub options: ServiceOptions,
}

/// Loads the artifacts named in `config` and replays persisted state.
pub fn load_state(config: &ServeConfig) -> Result<AppState, StartupError> {
    let artifact = |path: &Path, e: &dyn std::fmt::Display| StartupError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let corpus = Corpus::read_jsonl(&config.corpus, IngestFormat::Auto).map_err(|e| artifact(&config.corpus, &e))?;
    let seed = Lexicon::load_seed_lexicons(&config.variables, &config.relations)
        .map_err(|e| artifact(&config.variables, &e))?;
    let mut options = config.options.clone();
    options.embeddings = match &config.embeddings {
        Some(p) => EmbeddingSource::load(p, config.dim).map_err(|e| artifact(p, &e))?,
        None => EmbeddingSource::hashing_only(config.dim),
    };
    AppState::open(Arc::new(corpus), seed, options, &config.data_dir)
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, StartupError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| StartupError::Bind { addr, source })
}

/// Serves until `shutdown` resolves.
pub async fn serve_with(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), StartupError> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Serves until interrupted.
pub async fn serve(config: ServeConfig) -> Result<(), StartupError> {
    let state = Arc::new(load_state(&config)?);
    let listener = bind(config.addr).await?;
    serve_with(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
