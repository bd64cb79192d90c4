use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use econkg::bootstrap::{
    BootstrapConfig, BootstrapError, BootstrapRun, CandidateBatch, ChangeSummary, LabelDecision,
};
use econkg::corpus::Corpus;
use econkg::hashing::fnv1a64;
use econkg::lexicon::Lexicon;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    AwaitingLabels,
    Iterating,
    Converged,
}

/// One line of a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        config: BootstrapConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<String>,
    },
    Advanced,
    Labeled {
        batch_id: String,
        decisions: Vec<LabelDecision>,
    },
    /// Response to a request that carried an idempotency key.
    Responded {
        key: String,
        fingerprint: u64,
        status: u16,
        body: Value,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cached {
    pub fingerprint: u64,
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub state: SessionState,
    /// Completed bootstrap iterations.
    pub iteration: usize,
    /// Records in the bootstrap iteration log.
    pub log_length: usize,
    pub lexicon_snapshot: String,
    pub variables: usize,
    pub variants: usize,
    pub relations: usize,
    pub rejected: usize,
    pub open_batch: Option<String>,
}

pub fn lexicon_snapshot(lexicon: &Lexicon) -> String {
    let bytes = serde_json::to_vec(lexicon).expect("lexicon serializes");
    format!("{:016x}", fnv1a64(&bytes))
}

pub struct Session {
    id: String,
    run: BootstrapRun,
    state: SessionState,
    responses: HashMap<String, Cached>,
    log: Option<File>,
}

fn bootstrap_error(e: BootstrapError) -> ApiError {
    match e {
        BootstrapError::StaleBatch { .. } => ApiError::conflict("stale_batch", e.to_string()),
        BootstrapError::Converged => ApiError::conflict("illegal_transition", e.to_string()),
        BootstrapError::UnknownCandidate { .. } => ApiError::unprocessable("unknown_candidate", e.to_string()),
        BootstrapError::MissingPolarity(_) | BootstrapError::Lexicon(_) => {
            ApiError::unprocessable("invalid_label", e.to_string())
        }
        BootstrapError::Config(_) => ApiError::bad_request("invalid_config", e.to_string(), None),
        other => ApiError::internal(other.to_string()),
    }
}

impl Session {
    pub fn new(id: &str, corpus: Arc<Corpus>, seed: Lexicon, config: BootstrapConfig) -> Result<Self, ApiError> {
        let run = BootstrapRun::new(corpus, seed, config).map_err(bootstrap_error)?;
        Ok(Self {
            id: id.to_string(),
            run,
            state: SessionState::Idle,
            responses: HashMap::new(),
            log: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn lexicon(&self) -> &Lexicon {
        self.run.lexicon()
    }

    pub fn run(&self) -> &BootstrapRun {
        &self.run
    }

    pub fn batch(&self) -> Option<&CandidateBatch> {
        self.run.current_batch()
    }

    pub fn view(&self) -> SessionView {
        let lex = self.run.lexicon();
        SessionView {
            id: self.id.clone(),
            state: self.state,
            iteration: self.run.completed_iterations(),
            log_length: self.run.log().len(),
            lexicon_snapshot: lexicon_snapshot(lex),
            variables: lex.variables().len(),
            variants: lex.variant_count(),
            relations: lex.relations().len(),
            rejected: lex.rejects.variables.len() + lex.rejects.relations.len(),
            open_batch: self.run.current_batch().map(|b| b.id.clone()),
        }
    }

    /// idle | iterating -> awaiting_labels | converged
    pub fn advance(&mut self) -> Result<(), ApiError> {
        match self.state {
            SessionState::Idle | SessionState::Iterating => {}
            SessionState::AwaitingLabels => {
                return Err(ApiError::conflict(
                    "illegal_transition",
                    "a batch is awaiting labels".into(),
                ))
            }
            SessionState::Converged => {
                return Err(ApiError::conflict("illegal_transition", "the session has converged".into()))
            }
        }
        let open = self.run.open_batch().map_err(bootstrap_error)?.is_some();
        self.state = if open {
            SessionState::AwaitingLabels
        } else {
            SessionState::Converged
        };
        Ok(())
    }

    /// awaiting_labels -> iterating
    pub fn label(&mut self, batch_id: &str, decisions: &[LabelDecision]) -> Result<ChangeSummary, ApiError> {
        match self.state {
            SessionState::AwaitingLabels => {}
            SessionState::Converged => {
                return Err(ApiError::conflict("illegal_transition", "the session has converged".into()))
            }
            _ => {
                return Err(ApiError::conflict(
                    "stale_batch",
                    format!("batch {batch_id:?} is not open; no batch is awaiting labels"),
                ))
            }
        }
        let summary = self.run.submit(batch_id, decisions).map_err(bootstrap_error)?;
        self.state = SessionState::Iterating;
        Ok(summary)
    }

    pub fn cached(&self, key: &str) -> Option<&Cached> {
        self.responses.get(key)
    }

    pub fn remember(&mut self, key: &str, cached: Cached) {
        self.responses.insert(key.to_string(), cached);
    }

    pub fn attach_log(&mut self, file: File) {
        self.log = Some(file);
    }

    /// Appends `event` to the log and syncs it to disk.
    pub fn persist(&mut self, event: &Event) -> Result<(), ApiError> {
        let Some(f) = self.log.as_mut() else {
            return Ok(());
        };
        let mut line = serde_json::to_vec(event).map_err(|e| ApiError::internal(e.to_string()))?;
        line.push(b'\n');
        f.write_all(&line)
            .and_then(|_| f.sync_data())
            .map_err(|e| ApiError::internal(format!("session log: {e}")))
    }

    /// Applies an event read back from disk.
    fn replay(&mut self, event: Event) -> Result<(), ApiError> {
        match event {
            Event::Created { .. } => Err(ApiError::internal("repeated creation event".into())),
            Event::Advanced => self.advance(),
            Event::Labeled { batch_id, decisions } => self.label(&batch_id, &decisions).map(|_| ()),
            Event::Responded {
                key,
                fingerprint,
                status,
                body,
            } => {
                self.remember(
                    &key,
                    Cached {
                        fingerprint,
                        status,
                        body,
                    },
                );
                Ok(())
            }
        }
    }
}

pub fn session_log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

pub fn open_log(path: &Path) -> Result<File, ApiError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
}

/// Rebuilds a session from its event log.
/// Also returns the idempotency key the session was created under.
pub fn restore(path: &Path, corpus: Arc<Corpus>, seed: &Lexicon) -> Result<(Session, Option<String>), ApiError> {
    let file = File::open(path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    let mut session: Option<Session> = None;
    let mut created_key = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ApiError::internal(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line)
            .map_err(|e| ApiError::internal(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let context = |e: ApiError| ApiError::internal(format!("{} line {}: {}", path.display(), i + 1, e.message));
        match (&mut session, event) {
            (None, Event::Created { id, config, key }) => {
                session = Some(Session::new(&id, corpus.clone(), seed.clone(), config).map_err(context)?);
                created_key = key;
            }
            (None, _) => return Err(ApiError::internal(format!("{}: missing creation event", path.display()))),
            (Some(s), event) => s.replay(event).map_err(context)?,
        }
    }
    let mut session = session.ok_or_else(|| ApiError::internal(format!("{}: empty session log", path.display())))?;
    session.attach_log(open_log(path)?);
    Ok((session, created_key))
}
