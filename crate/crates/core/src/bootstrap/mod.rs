//! Weakly supervised expansion of the variable and relation sets.
//!
//! Each iteration runs four phases: a model proposal (Step 2), relation
//! discovery in sentences rich in variables (Step 3), another proposal, and
//! variable discovery in sentences rich in relation keywords (Step 4). Every
//! non-empty phase produces one candidate batch that an adjudicator labels.
//! The loop stops after an iteration with no accepted additions.

pub mod planted;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Annotation, Matcher};
use crate::corpus::{Corpus, SentenceRef};
use crate::lexicon::{
    relation_key, train_phrase_model, variable_key, Lexicon, LexiconError, PhraseModel, Polarity,
    Source, TrainingConfig, TrainingSnapshot,
};
use crate::text;

/// Provenance sentences kept per candidate.
const MAX_REFS: usize = 3;
/// Tokens allowed inside a phrase besides words.
const INNER_PUNCTUATION: [&str; 5] = ["'", "’", "-", "&", "/"];

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("accepted relation {0:?} has no polarity")]
    MissingPolarity(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no adjudicator: supply batch label files or an interactive session")]
    NoAdjudicator,
    #[error("batch {given:?} is not the open batch (open: {open:?})")]
    StaleBatch { given: String, open: Option<String> },
    #[error("batch {batch:?} has no {kind} candidate {candidate:?}")]
    UnknownCandidate {
        batch: String,
        kind: CandidateKind,
        candidate: String,
    },
    #[error("the run has converged")]
    Converged,
    #[error("labels line {line}: {message}")]
    BadLabel { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateKind {
    Variable,
    Relation,
}

impl fmt::Display for CandidateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidateKind::Variable => "variable",
            CandidateKind::Relation => "relation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Propose,
    RelationGap,
    VariableGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchStatus {
    Open,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateItem {
    pub text: String,
    pub confidence: f64,
    pub refs: Vec<SentenceRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBatch {
    pub id: String,
    pub iteration: usize,
    pub step: Step,
    pub kind: CandidateKind,
    /// Descending confidence, ties by text.
    pub items: Vec<CandidateItem>,
    pub status: BatchStatus,
    /// More candidates qualified than the batch size allowed.
    pub truncated: bool,
}

impl CandidateBatch {
    pub fn find(&self, candidate: &str) -> Option<&CandidateItem> {
        let key = candidate_key(self.kind, candidate);
        self.items
            .iter()
            .find(|i| candidate_key(self.kind, &i.text) == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDecision {
    pub candidate: String,
    pub kind: CandidateKind,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_name: Option<String>,
}

impl LabelDecision {
    pub fn accept_variable(candidate: &str) -> Self {
        Self {
            candidate: candidate.to_string(),
            kind: CandidateKind::Variable,
            decision: Decision::Accept,
            polarity: None,
            canonical_name: None,
        }
    }

    pub fn accept_relation(candidate: &str, polarity: Polarity) -> Self {
        Self {
            candidate: candidate.to_string(),
            kind: CandidateKind::Relation,
            decision: Decision::Accept,
            polarity: Some(polarity),
            canonical_name: None,
        }
    }

    pub fn reject(candidate: &str, kind: CandidateKind) -> Self {
        Self {
            candidate: candidate.to_string(),
            kind,
            decision: Decision::Reject,
            polarity: None,
            canonical_name: None,
        }
    }
}

fn candidate_key(kind: CandidateKind, text: &str) -> String {
    match kind {
        CandidateKind::Variable => variable_key(text),
        CandidateKind::Relation => relation_key(text),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub added_variables: usize,
    pub added_variants: usize,
    pub added_relations: usize,
    pub rejected: usize,
    /// Accepted candidates that were already known.
    pub skipped: usize,
}

impl ChangeSummary {
    pub fn added(&self) -> usize {
        self.added_variables + self.added_variants + self.added_relations
    }
}

/// Apply editor decisions to a copy of `lexicon`. Accepted items are tagged
/// with `source`; rejected ones go to the reject list. All decisions are
/// validated before anything changes.
pub fn apply_labels(
    lexicon: &Lexicon,
    decisions: &[LabelDecision],
    source: Source,
) -> Result<(Lexicon, ChangeSummary), BootstrapError> {
    for d in decisions {
        if candidate_key(d.kind, &d.candidate).is_empty() {
            return Err(LexiconError::EmptyName.into());
        }
        if d.kind == CandidateKind::Relation && d.decision == Decision::Accept && d.polarity.is_none()
        {
            return Err(BootstrapError::MissingPolarity(d.candidate.clone()));
        }
    }
    let mut lex = lexicon.clone();
    let mut summary = ChangeSummary::default();
    for d in decisions {
        match (d.kind, d.decision) {
            (CandidateKind::Variable, Decision::Accept) => {
                if lex.find_variable(&d.candidate).is_some() {
                    summary.skipped += 1;
                    continue;
                }
                match d.canonical_name.as_deref().map(str::trim) {
                    Some(c) if !c.is_empty() && variable_key(c) != variable_key(&d.candidate) => {
                        if lex.find_variable(c).is_some() {
                            lex.add_variant(c, d.candidate.trim())?;
                            summary.added_variants += 1;
                        } else {
                            lex.add_variable(c, vec![d.candidate.trim().to_string()], source)?;
                            summary.added_variables += 1;
                        }
                    }
                    _ => {
                        lex.add_variable(&d.candidate, Vec::new(), source)?;
                        summary.added_variables += 1;
                    }
                }
            }
            (CandidateKind::Relation, Decision::Accept) => {
                if lex.find_relation(&d.candidate).is_some() {
                    summary.skipped += 1;
                    continue;
                }
                let polarity = d.polarity.expect("validated above");
                lex.add_relation(&d.candidate, polarity, source)?;
                summary.added_relations += 1;
            }
            (CandidateKind::Variable, Decision::Reject) => {
                if lex.find_variable(&d.candidate).is_none()
                    && lex.rejects.variables.insert(variable_key(&d.candidate))
                {
                    summary.rejected += 1;
                }
            }
            (CandidateKind::Relation, Decision::Reject) => {
                if lex.find_relation(&d.candidate).is_none()
                    && lex.rejects.relations.insert(relation_key(&d.candidate))
                {
                    summary.rejected += 1;
                }
            }
        }
    }
    lex.check_invariants()?;
    Ok((lex, summary))
}

fn usable_phrase(tokens: &[String]) -> bool {
    match (tokens.first(), tokens.last()) {
        (Some(first), Some(last)) => {
            !text::is_punctuation(first)
                && !text::is_punctuation(last)
                && tokens
                    .iter()
                    .all(|t| !text::is_punctuation(t) || INNER_PUNCTUATION.contains(&t.as_str()))
        }
        _ => false,
    }
}

#[derive(Default)]
struct Pool {
    /// key -> (folded tokens, sentence count, refs)
    entries: BTreeMap<String, (Vec<String>, usize, Vec<SentenceRef>)>,
}

impl Pool {
    fn add_sentence(&mut self, r: &SentenceRef, phrases: BTreeMap<String, Vec<String>>) {
        for (key, tokens) in phrases {
            let e = self
                .entries
                .entry(key)
                .or_insert_with(|| (tokens, 0, Vec::new()));
            e.1 += 1;
            if e.2.len() < MAX_REFS {
                e.2.push(r.clone());
            }
        }
    }
}

fn rank(mut items: Vec<(String, CandidateItem)>, k: usize) -> (Vec<CandidateItem>, bool) {
    items.sort_by(|a, b| {
        b.1.confidence
            .total_cmp(&a.1.confidence)
            .then_with(|| a.0.cmp(&b.0))
    });
    let truncated = items.len() > k;
    items.truncate(k);
    (items.into_iter().map(|(_, i)| i).collect(), truncated)
}

fn variable_excluded(lexicon: &Lexicon, key: &str) -> bool {
    lexicon.find_variable(key).is_some() || lexicon.rejects.variables.contains(key)
}

fn batch(kind: CandidateKind, step: Step, items: Vec<CandidateItem>, truncated: bool) -> CandidateBatch {
    CandidateBatch {
        id: String::new(),
        iteration: 0,
        step,
        kind,
        items,
        status: BatchStatus::Open,
        truncated,
    }
}

/// Step 2: the `k` highest-scoring corpus phrases with score >= `threshold`
/// that are not yet variables and were never rejected.
pub fn propose_variable_candidates(
    model: &PhraseModel,
    corpus: &Corpus,
    lexicon: &Lexicon,
    threshold: f64,
    k: usize,
) -> CandidateBatch {
    propose_with(model, corpus, lexicon, threshold, k, 5)
}

fn propose_with(
    model: &PhraseModel,
    corpus: &Corpus,
    lexicon: &Lexicon,
    threshold: f64,
    k: usize,
    n_max: usize,
) -> CandidateBatch {
    let mut pool = Pool::default();
    for s in corpus.sentences() {
        let folded = s.folded();
        let mut phrases = BTreeMap::new();
        for start in 0..folded.len() {
            for n in 1..=n_max.min(folded.len() - start) {
                let tokens = &folded[start..start + n];
                if usable_phrase(tokens) {
                    phrases.insert(tokens.join(" "), tokens.to_vec());
                }
            }
        }
        pool.add_sentence(&s.reference(), phrases);
    }
    let items: Vec<(String, CandidateItem)> = pool
        .entries
        .into_iter()
        .filter(|(key, _)| !variable_excluded(lexicon, key))
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(key, (tokens, _, refs))| {
            let confidence = model.score_tokens(&tokens);
            (confidence >= threshold).then(|| {
                (
                    key,
                    CandidateItem {
                        text: text::detokenize(&tokens),
                        confidence,
                        refs,
                    },
                )
            })
        })
        .collect();
    let (items, truncated) = rank(items, k);
    batch(CandidateKind::Variable, Step::Propose, items, truncated)
}

struct Annotated {
    reference: SentenceRef,
    folded: Vec<String>,
    annotation: Annotation,
}

fn annotate_corpus(corpus: &Corpus, lexicon: &Lexicon) -> Vec<Annotated> {
    let matcher = Matcher::new(lexicon);
    let sentences: Vec<_> = corpus.sentences().collect();
    sentences
        .par_iter()
        .map(|s| Annotated {
            reference: s.reference(),
            folded: s.folded(),
            annotation: matcher.annotate(s),
        })
        .collect()
}

fn relation_gap(annotated: &[Annotated], min_vars: usize, max_rels: usize) -> Vec<&Annotated> {
    let mut hits: Vec<_> = annotated
        .iter()
        .filter(|a| {
            a.annotation.distinct_variables() >= min_vars && a.annotation.relations.len() <= max_rels
        })
        .collect();
    hits.sort_by_key(|a| {
        (
            std::cmp::Reverse(a.annotation.distinct_variables()),
            a.annotation.relations.len(),
        )
    });
    hits
}

fn variable_gap(annotated: &[Annotated], min_rels: usize, max_vars: usize) -> Vec<&Annotated> {
    let mut hits: Vec<_> = annotated
        .iter()
        .filter(|a| {
            a.annotation.relations.len() >= min_rels && a.annotation.distinct_variables() <= max_vars
        })
        .collect();
    hits.sort_by_key(|a| {
        (
            std::cmp::Reverse(a.annotation.relations.len()),
            a.annotation.distinct_variables(),
        )
    });
    hits
}

/// Step 3 sentences: at least `min_vars` distinct variables and at most
/// `max_rels` relation-keyword mentions, most variables first.
pub fn find_relation_gap_sentences(
    corpus: &Corpus,
    lexicon: &Lexicon,
    min_vars: usize,
    max_rels: usize,
) -> Vec<SentenceRef> {
    let annotated = annotate_corpus(corpus, lexicon);
    relation_gap(&annotated, min_vars, max_rels)
        .into_iter()
        .map(|a| a.reference.clone())
        .collect()
}

/// Step 4 sentences: at least `min_rels` relation-keyword mentions and at
/// most `max_vars` distinct variables, most relation mentions first.
pub fn find_variable_gap_sentences(
    corpus: &Corpus,
    lexicon: &Lexicon,
    min_rels: usize,
    max_vars: usize,
) -> Vec<SentenceRef> {
    let annotated = annotate_corpus(corpus, lexicon);
    variable_gap(&annotated, min_rels, max_vars)
        .into_iter()
        .map(|a| a.reference.clone())
        .collect()
}

/// Relation candidates: n-grams lying between two consecutive variable
/// mentions of a gap sentence. Confidence is the share of gap sentences that
/// contain the candidate (any inflection).
fn relation_candidates(
    gap: &[&Annotated],
    lexicon: &Lexicon,
    n_max: usize,
    max_span: usize,
    k: usize,
) -> CandidateBatch {
    let mut pool = Pool::default();
    let mut surfaces: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    for a in gap {
        let mut phrases = BTreeMap::new();
        for w in a.annotation.variables.windows(2) {
            let (lo, hi) = (w[0].end, w[1].start);
            if hi <= lo || hi - lo > max_span {
                continue;
            }
            for start in lo..hi {
                for n in 1..=n_max.min(hi - start) {
                    let tokens = &a.folded[start..start + n];
                    if tokens.iter().any(|t| text::is_punctuation(t)) {
                        continue;
                    }
                    let surface = tokens.join(" ");
                    let key = relation_key(&surface);
                    if key.is_empty() {
                        continue;
                    }
                    *surfaces.entry(key.clone()).or_default().entry(surface).or_default() += 1;
                    phrases.insert(key, tokens.to_vec());
                }
            }
        }
        pool.add_sentence(&a.reference, phrases);
    }
    let total = gap.len().max(1) as f64;
    let items = pool
        .entries
        .into_iter()
        .filter(|(key, _)| {
            lexicon.find_relation(key).is_none() && !lexicon.rejects.relations.contains(key)
        })
        .map(|(key, (_, count, refs))| {
            // Most frequent inflection, ties by text.
            let text = surfaces[&key]
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(s, _)| s.clone())
                .unwrap_or_default();
            (
                key,
                CandidateItem {
                    text,
                    confidence: count as f64 / total,
                    refs,
                },
            )
        })
        .collect();
    let (items, truncated) = rank(items, k);
    batch(CandidateKind::Relation, Step::RelationGap, items, truncated)
}

/// Variable candidates: n-grams of gap sentences not covered by any
/// mention, scored by the phrase model when one is available and by the
/// share of gap sentences otherwise.
fn variable_candidates(
    gap: &[&Annotated],
    lexicon: &Lexicon,
    model: Option<&PhraseModel>,
    n_max: usize,
    k: usize,
) -> CandidateBatch {
    let mut pool = Pool::default();
    for a in gap {
        let covered = a.annotation.covered(a.folded.len());
        let mut phrases = BTreeMap::new();
        for start in 0..a.folded.len() {
            for n in 1..=n_max.min(a.folded.len() - start) {
                if covered[start..start + n].iter().any(|&c| c) {
                    break;
                }
                let tokens = &a.folded[start..start + n];
                if usable_phrase(tokens) {
                    phrases.insert(tokens.join(" "), tokens.to_vec());
                }
            }
        }
        pool.add_sentence(&a.reference, phrases);
    }
    let total = gap.len().max(1) as f64;
    let items: Vec<(String, CandidateItem)> = pool
        .entries
        .into_iter()
        .filter(|(key, _)| !variable_excluded(lexicon, key))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(key, (tokens, count, refs))| {
            let confidence = match model {
                Some(m) => m.score_tokens(&tokens),
                None => count as f64 / total,
            };
            (
                key,
                CandidateItem {
                    text: text::detokenize(&tokens),
                    confidence,
                    refs,
                },
            )
        })
        .collect();
    let (items, truncated) = rank(items, k);
    batch(CandidateKind::Variable, Step::VariableGap, items, truncated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    /// Minimum Step 2 confidence.
    pub threshold: f64,
    /// Batch size.
    pub k: usize,
    pub min_vars: usize,
    pub max_rels: usize,
    pub min_rels: usize,
    pub max_vars: usize,
    pub max_iterations: usize,
    /// Longest stretch between two variable mentions searched for keywords.
    pub max_relation_span: usize,
    pub training: TrainingConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            k: 20,
            min_vars: 2,
            max_rels: 0,
            min_rels: 1,
            max_vars: 1,
            max_iterations: 10,
            max_relation_span: 6,
            training: TrainingConfig::default(),
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        let bad = |m: &str| Err(BootstrapError::Config(m.to_string()));
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad("threshold must lie in (0, 1]");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.min_vars < 2 {
            return bad("min_vars must be at least 2");
        }
        if self.min_rels < 1 {
            return bad("min_rels must be at least 1");
        }
        if self.training.n_max == 0 {
            return bad("n_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Batch {
        batch: CandidateBatch,
    },
    Decision {
        iteration: usize,
        batch_id: String,
        decision: LabelDecision,
    },
    Applied {
        iteration: usize,
        batch_id: String,
        summary: ChangeSummary,
    },
    Retrained {
        iteration: usize,
        snapshot: TrainingSnapshot,
    },
    TrainingSkipped {
        iteration: usize,
        reason: String,
    },
    IterationEnd {
        iteration: usize,
        additions: usize,
        converged: bool,
    },
}

pub fn write_log<W: Write>(records: &[LogRecord], mut out: W) -> Result<(), BootstrapError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_log<R: BufRead>(input: R) -> Result<Vec<LogRecord>, BootstrapError> {
    read_json_lines(input)
}

fn read_json_lines<T: serde::de::DeserializeOwned, R: BufRead>(
    input: R,
) -> Result<Vec<T>, BootstrapError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| BootstrapError::BadLabel {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Source of editor decisions for a batch. Candidates left undecided are
/// rejected.
pub trait Adjudicator {
    fn decide(
        &mut self,
        batch: &CandidateBatch,
        lexicon: &Lexicon,
    ) -> Result<Vec<LabelDecision>, BootstrapError>;
}

impl<F> Adjudicator for F
where
    F: FnMut(&CandidateBatch, &Lexicon) -> Vec<LabelDecision>,
{
    fn decide(
        &mut self,
        batch: &CandidateBatch,
        lexicon: &Lexicon,
    ) -> Result<Vec<LabelDecision>, BootstrapError> {
        Ok(self(batch, lexicon))
    }
}

/// Decisions prepared in advance, looked up by kind and candidate.
#[derive(Debug, Clone, Default)]
pub struct BatchLabels {
    decisions: HashMap<(CandidateKind, String), LabelDecision>,
}

impl BatchLabels {
    /// Earlier decisions win over later ones for the same candidate.
    pub fn new<I: IntoIterator<Item = LabelDecision>>(decisions: I) -> Self {
        let mut map = HashMap::new();
        for d in decisions {
            map.entry((d.kind, candidate_key(d.kind, &d.candidate)))
                .or_insert(d);
        }
        Self { decisions: map }
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<LabelDecision>, BootstrapError> {
        read_json_lines(input)
    }

    /// Replay the decisions recorded in an iteration log.
    pub fn from_log(records: &[LogRecord]) -> Self {
        Self::new(records.iter().filter_map(|r| match r {
            LogRecord::Decision { decision, .. } => Some(decision.clone()),
            _ => None,
        }))
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

impl Adjudicator for BatchLabels {
    fn decide(
        &mut self,
        batch: &CandidateBatch,
        _lexicon: &Lexicon,
    ) -> Result<Vec<LabelDecision>, BootstrapError> {
        Ok(batch
            .items
            .iter()
            .filter_map(|item| {
                self.decisions
                    .get(&(batch.kind, candidate_key(batch.kind, &item.text)))
                    .map(|d| LabelDecision {
                        candidate: item.text.clone(),
                        ..d.clone()
                    })
            })
            .collect())
    }
}

const PHASES: [Step; 4] = [Step::Propose, Step::RelationGap, Step::Propose, Step::VariableGap];

/// Resumable bootstrap state machine. Callers alternate `open_batch` and
/// `submit` until `open_batch` returns `None`.
#[derive(Debug, Clone)]
pub struct BootstrapRun {
    corpus: Arc<Corpus>,
    lexicon: Lexicon,
    config: BootstrapConfig,
    model: Option<PhraseModel>,
    model_stale: bool,
    iteration: usize,
    phase: usize,
    additions: usize,
    open: Option<CandidateBatch>,
    batches: usize,
    log: Vec<LogRecord>,
    converged: bool,
}

impl BootstrapRun {
    pub fn new(
        corpus: Arc<Corpus>,
        lexicon: Lexicon,
        config: BootstrapConfig,
    ) -> Result<Self, BootstrapError> {
        config.validate()?;
        lexicon.check_invariants()?;
        Ok(Self {
            corpus,
            lexicon,
            config,
            model: None,
            model_stale: true,
            iteration: 0,
            phase: 0,
            additions: 0,
            open: None,
            batches: 0,
            log: Vec::new(),
            converged: false,
        })
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn config(&self) -> &BootstrapConfig {
        &self.config
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// Iteration in progress (1-based), or the last one once converged.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Iterations that have finished.
    pub fn completed_iterations(&self) -> usize {
        self.log
            .iter()
            .filter(|r| matches!(r, LogRecord::IterationEnd { .. }))
            .count()
    }

    pub fn current_batch(&self) -> Option<&CandidateBatch> {
        self.open.as_ref()
    }

    pub fn into_parts(self) -> (Lexicon, Vec<LogRecord>) {
        (self.lexicon, self.log)
    }

    /// The batch awaiting labels, computing the next one if needed. Empty
    /// phases are logged and skipped. `None` once converged.
    pub fn open_batch(&mut self) -> Result<Option<&CandidateBatch>, BootstrapError> {
        loop {
            if self.converged {
                return Ok(None);
            }
            if self.open.is_some() {
                return Ok(self.open.as_ref());
            }
            if self.iteration == 0 {
                if self.config.max_iterations == 0 {
                    self.converged = true;
                    continue;
                }
                self.iteration = 1;
            }
            if self.phase == PHASES.len() {
                let done = self.additions == 0 || self.iteration >= self.config.max_iterations;
                self.log.push(LogRecord::IterationEnd {
                    iteration: self.iteration,
                    additions: self.additions,
                    converged: self.additions == 0,
                });
                if done {
                    self.converged = true;
                } else {
                    self.iteration += 1;
                    self.phase = 0;
                    self.additions = 0;
                }
                continue;
            }
            let mut batch = self.build(PHASES[self.phase]);
            self.batches += 1;
            batch.id = format!("b{:04}", self.batches);
            batch.iteration = self.iteration;
            if batch.items.is_empty() {
                batch.status = BatchStatus::Resolved;
                self.log.push(LogRecord::Batch { batch });
                self.phase += 1;
                continue;
            }
            self.open = Some(batch);
        }
    }

    fn ensure_model(&mut self) {
        if !self.model_stale {
            return;
        }
        self.model_stale = false;
        match train_phrase_model(&self.lexicon, &self.corpus, &self.config.training) {
            Ok(m) => {
                self.log.push(LogRecord::Retrained {
                    iteration: self.iteration,
                    snapshot: m.snapshot.clone(),
                });
                self.model = Some(m);
            }
            Err(e) => {
                self.log.push(LogRecord::TrainingSkipped {
                    iteration: self.iteration,
                    reason: e.to_string(),
                });
                self.model = None;
            }
        }
    }

    fn build(&mut self, step: Step) -> CandidateBatch {
        if step != Step::RelationGap {
            self.ensure_model();
        }
        let c = &self.config;
        match step {
            Step::Propose => {
                match &self.model {
                    Some(m) => propose_with(
                        m,
                        &self.corpus,
                        &self.lexicon,
                        c.threshold,
                        c.k,
                        c.training.n_max,
                    ),
                    None => batch(CandidateKind::Variable, step, Vec::new(), false),
                }
            }
            Step::RelationGap => {
                let annotated = annotate_corpus(&self.corpus, &self.lexicon);
                let gap = relation_gap(&annotated, c.min_vars, c.max_rels);
                relation_candidates(&gap, &self.lexicon, c.training.n_max, c.max_relation_span, c.k)
            }
            Step::VariableGap => {
                let annotated = annotate_corpus(&self.corpus, &self.lexicon);
                let gap = variable_gap(&annotated, c.min_rels, c.max_vars);
                variable_candidates(&gap, &self.lexicon, self.model.as_ref(), c.training.n_max, c.k)
            }
        }
    }

    /// Label the open batch. Every decision must name a candidate of the
    /// batch; candidates without a decision are rejected. On error nothing
    /// changes.
    pub fn submit(
        &mut self,
        batch_id: &str,
        decisions: &[LabelDecision],
    ) -> Result<ChangeSummary, BootstrapError> {
        if self.converged {
            return Err(BootstrapError::Converged);
        }
        let open = match &self.open {
            Some(b) if b.id == batch_id => b,
            other => {
                return Err(BootstrapError::StaleBatch {
                    given: batch_id.to_string(),
                    open: other.as_ref().map(|b| b.id.clone()),
                })
            }
        };
        let mut chosen: HashMap<String, &LabelDecision> = HashMap::new();
        for d in decisions {
            if d.kind != open.kind || open.find(&d.candidate).is_none() {
                return Err(BootstrapError::UnknownCandidate {
                    batch: open.id.clone(),
                    kind: d.kind,
                    candidate: d.candidate.clone(),
                });
            }
            chosen.entry(candidate_key(d.kind, &d.candidate)).or_insert(d);
        }
        let full: Vec<LabelDecision> = open
            .items
            .iter()
            .map(|item| match chosen.get(&candidate_key(open.kind, &item.text)) {
                Some(d) => LabelDecision {
                    candidate: item.text.clone(),
                    ..(*d).clone()
                },
                None => LabelDecision::reject(&item.text, open.kind),
            })
            .collect();
        let source = match open.step {
            Step::Propose => Source::Bootstrapped,
            _ => Source::Human,
        };
        let (lexicon, summary) = apply_labels(&self.lexicon, &full, source)?;

        let mut batch = self.open.take().expect("checked above");
        batch.status = BatchStatus::Resolved;
        let id = batch.id.clone();
        self.log.push(LogRecord::Batch { batch });
        for decision in full {
            self.log.push(LogRecord::Decision {
                iteration: self.iteration,
                batch_id: id.clone(),
                decision,
            });
        }
        self.log.push(LogRecord::Applied {
            iteration: self.iteration,
            batch_id: id,
            summary,
        });
        self.lexicon = lexicon;
        self.additions += summary.added();
        if summary.added_variables + summary.added_variants > 0 {
            self.model_stale = true;
        }
        self.phase += 1;
        Ok(summary)
    }

    /// Drive the run to convergence with `adjudicator`.
    pub fn run(&mut self, adjudicator: &mut dyn Adjudicator) -> Result<(), BootstrapError> {
        while let Some(b) = self.open_batch()? {
            let b = b.clone();
            let decisions = adjudicator.decide(&b, &self.lexicon)?;
            self.submit(&b.id, &decisions)?;
        }
        Ok(())
    }
}

/// Run the loop from `lexicon` to convergence; returns the final lexicon and
/// the iteration log.
pub fn run_until_converged(
    corpus: Arc<Corpus>,
    lexicon: Lexicon,
    adjudicator: Option<&mut dyn Adjudicator>,
    config: BootstrapConfig,
) -> Result<(Lexicon, Vec<LogRecord>), BootstrapError> {
    let adjudicator = adjudicator.ok_or(BootstrapError::NoAdjudicator)?;
    let mut run = BootstrapRun::new(corpus, lexicon, config)?;
    run.run(adjudicator)?;
    Ok(run.into_parts())
}

/// Distinct phrase keys of the corpus; an upper bound on iterations.
pub fn distinct_phrase_count(corpus: &Corpus, n_max: usize) -> usize {
    let mut keys = BTreeSet::new();
    for s in corpus.sentences() {
        let folded = s.folded();
        for start in 0..folded.len() {
            for n in 1..=n_max.min(folded.len() - start) {
                keys.insert(folded[start..start + n].join(" "));
            }
        }
    }
    keys.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> Lexicon {
        let mut lex = Lexicon::new();
        lex.add_variable("oil price", vec![], Source::Seed).unwrap();
        lex.add_variable("inflation", vec!["CPI".into()], Source::Seed).unwrap();
        lex.add_variable("wages", vec![], Source::Seed).unwrap();
        lex.add_relation("push up", Polarity::Increase, Source::Seed)
            .unwrap();
        lex
    }

    #[test]
    fn apply_labels_contracts() {
        let lex = lexicon();
        let (same, s) = apply_labels(&lex, &[], Source::Human).unwrap();
        assert_eq!(same, lex);
        assert_eq!(s.added(), 0);

        let (grown, s) = apply_labels(
            &lex,
            &[LabelDecision::accept_variable("migrant worker shortage")],
            Source::Human,
        )
        .unwrap();
        assert_eq!(grown.variables().len(), lex.variables().len() + 1);
        assert_eq!(s.added_variables, 1);

        let mut no_polarity = LabelDecision::accept_relation("drag down", Polarity::Decrease);
        no_polarity.polarity = None;
        assert!(matches!(
            apply_labels(&lex, &[no_polarity], Source::Human),
            Err(BootstrapError::MissingPolarity(_))
        ));

        let mut alias = LabelDecision::accept_variable("consumer price index");
        alias.canonical_name = Some("Inflation".into());
        let (merged, s) = apply_labels(&lex, &[alias], Source::Human).unwrap();
        assert_eq!(s.added_variants, 1);
        assert_eq!(
            merged.find_variable("consumer price index"),
            merged.find_variable("inflation")
        );

        let (rejected, s) = apply_labels(
            &lex,
            &[LabelDecision::reject("the of", CandidateKind::Variable)],
            Source::Human,
        )
        .unwrap();
        assert_eq!(s.rejected, 1);
        assert!(rejected.rejects.variables.contains("the of"));
    }

    #[test]
    fn gap_sentence_rules() {
        let lex = lexicon();
        let corpus = Corpus::from_texts([
            ("a", "Wages and the oil price and inflation moved together."),
            ("b", "Coal output pushed up rents."),
            ("c", "Nothing happened."),
            ("d", "The oil price pushed up inflation."),
        ])
        .unwrap();
        let rel = find_relation_gap_sentences(&corpus, &lex, 2, 0);
        assert_eq!(rel, vec![SentenceRef { doc: "a".into(), sent: 0 }]);
        let var = find_variable_gap_sentences(&corpus, &lex, 1, 0);
        assert_eq!(var, vec![SentenceRef { doc: "b".into(), sent: 0 }]);
        assert!(find_relation_gap_sentences(&Corpus::default(), &lex, 2, 0).is_empty());
    }

    #[test]
    fn worked_sentence_is_not_a_relation_gap() {
        let lex = Lexicon::from_seed_readers(
            "name,variants\nmigrant worker shortage,\ngrowth rate of migrant workers' wages,\nfood prices,\nconsumer price index,\ninflation,\n".as_bytes(),
            "keyword,polarity\nincrease,increase\nresulted in the increase,increase\npush up,increase\nmake ... higher,increase\n".as_bytes(),
        )
        .unwrap();
        let corpus = Corpus::from_texts([(
            "gao",
            "Dr. Gao concluded that a long-term systematic migrant worker shortage began to appear in the Chinese migrant labor market around 2005, which greatly increased the growth rate of migrant workers' wages, resulted in the increase of food prices, and pushed up the increase in consumer price index, making the average level of  inflation probably 100 to 200 basis points higher.",
        )])
        .unwrap();
        assert!(find_relation_gap_sentences(&corpus, &lex, 2, 0).is_empty());
        assert_eq!(find_relation_gap_sentences(&corpus, &lex, 2, 10).len(), 1);
    }

    #[test]
    fn zero_budget_returns_input() {
        let corpus = Arc::new(Corpus::from_texts([("a", "Wages pushed up inflation.")]).unwrap());
        let mut reject_all = |_: &CandidateBatch, _: &Lexicon| Vec::new();
        let config = BootstrapConfig {
            max_iterations: 0,
            ..Default::default()
        };
        let (lex, log) =
            run_until_converged(corpus.clone(), lexicon(), Some(&mut reject_all), config).unwrap();
        assert_eq!(lex, lexicon());
        assert!(log.is_empty());
        assert!(matches!(
            run_until_converged(corpus, lexicon(), None, BootstrapConfig::default()),
            Err(BootstrapError::NoAdjudicator)
        ));
    }

    #[test]
    fn stale_and_unknown_submissions_are_refused() {
        let corpus = Arc::new(
            Corpus::from_texts([
                ("a", "Wages and inflation and the oil price rose."),
                ("b", "The oil price lifted wages."),
                ("c", "Coal output pushed up the oil price."),
            ])
            .unwrap(),
        );
        let mut run = BootstrapRun::new(corpus, lexicon(), BootstrapConfig::default()).unwrap();
        let b = run.open_batch().unwrap().unwrap().clone();
        assert!(matches!(
            run.submit("nope", &[]),
            Err(BootstrapError::StaleBatch { .. })
        ));
        let bogus = LabelDecision::reject("not a candidate at all", b.kind);
        assert!(matches!(
            run.submit(&b.id, &[bogus]),
            Err(BootstrapError::UnknownCandidate { .. })
        ));
        run.submit(&b.id, &[]).unwrap();
        assert!(matches!(
            run.submit(&b.id, &[]),
            Err(BootstrapError::StaleBatch { .. }) | Err(BootstrapError::Converged)
        ));
    }
}
