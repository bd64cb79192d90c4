//! Phrase-confidence model: L2-regularized logistic regression over
//! token, character-trigram and whole-phrase indicator features.
//!
//! Positives are variable names and variants that occur in the corpus;
//! negatives are corpus phrases outside the variable set, sampled with a
//! recorded seed. Training is full-batch gradient descent with class
//! balancing and a fixed epoch budget, so equal inputs give equal weights.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Lexicon, LexiconError};
use crate::corpus::{Corpus, Phrase};
use crate::hashing::Fnv;
use crate::text;

/// Logit clamp; keeps every score strictly inside (0, 1).
const MAX_LOGIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub negative_ratio: f64,
    pub seed: u64,
    pub n_max: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub min_epochs: usize,
    pub max_epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            negative_ratio: 5.0,
            seed: 42,
            n_max: 5,
            learning_rate: 1.0,
            l2: 1e-4,
            min_epochs: 300,
            max_epochs: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSnapshot {
    pub id: String,
    pub seed: u64,
    pub negative_ratio: f64,
    pub positives: usize,
    pub negatives: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseModel {
    features: BTreeMap<String, usize>,
    weights: Vec<f64>,
    bias: f64,
    pub snapshot: TrainingSnapshot,
}

type SparseRow = Vec<(usize, f64)>;

fn feature_names(tokens: &[String]) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    if tokens.is_empty() {
        return names;
    }
    let joined = tokens.join(" ");
    names.insert(format!("p={joined}"));
    names.insert(format!("first={}", tokens[0]));
    names.insert(format!("last={}", tokens[tokens.len() - 1]));
    names.insert(format!("len={}", tokens.len().min(6)));
    for t in tokens {
        names.insert(format!("w={t}"));
    }
    let padded: Vec<char> = format!("^{joined}$").chars().collect();
    for w in padded.windows(3) {
        names.insert(format!("c={}", w.iter().collect::<String>()));
    }
    names
}

impl PhraseModel {
    fn encode(&self, tokens: &[String]) -> SparseRow {
        let names = feature_names(tokens);
        if names.is_empty() {
            return Vec::new();
        }
        let value = 1.0 / (names.len() as f64).sqrt();
        names
            .iter()
            .filter_map(|n| self.features.get(n).map(|&i| (i, value)))
            .collect()
    }

    /// Linear response before the logistic link.
    pub fn logit(&self, folded_tokens: &[String]) -> f64 {
        let z = self.bias
            + self
                .encode(folded_tokens)
                .iter()
                .map(|&(i, v)| self.weights[i] * v)
                .sum::<f64>();
        z.clamp(-MAX_LOGIT, MAX_LOGIT)
    }

    /// Confidence that the folded token sequence names a variable.
    pub fn score_tokens(&self, folded_tokens: &[String]) -> f64 {
        sigmoid(self.logit(folded_tokens))
    }

    pub fn score_text(&self, phrase: &str) -> f64 {
        self.score_tokens(&text::folded_tokens(phrase))
    }

    pub fn score(&self, phrase: &Phrase) -> f64 {
        let folded: Vec<String> = phrase.tokens.iter().map(|t| text::fold(t)).collect();
        self.score_tokens(&folded)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Distinct folded phrases (n <= n_max) of the corpus, sorted.
fn corpus_phrases(corpus: &Corpus, n_max: usize) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for sentence in corpus.sentences() {
        let folded = sentence.folded();
        for start in 0..folded.len() {
            for n in 1..=n_max.min(folded.len() - start) {
                out.insert(folded[start..start + n].to_vec());
            }
        }
    }
    out
}

/// Variable forms (as folded token vectors) that occur in the corpus.
fn occurring_variable_forms(lexicon: &Lexicon, corpus: &Corpus) -> BTreeSet<Vec<String>> {
    let forms: HashSet<Vec<String>> = lexicon
        .variables()
        .iter()
        .flat_map(|v| v.forms().map(text::folded_tokens))
        .filter(|f| !f.is_empty())
        .collect();
    let max_len = forms.iter().map(Vec::len).max().unwrap_or(0);
    let mut found = BTreeSet::new();
    for sentence in corpus.sentences() {
        let folded = sentence.folded();
        for start in 0..folded.len() {
            for n in 1..=max_len.min(folded.len() - start) {
                let window = &folded[start..start + n];
                if forms.contains(window) {
                    found.insert(window.to_vec());
                }
            }
        }
    }
    found
}

pub fn train_phrase_model(
    lexicon: &Lexicon,
    corpus: &Corpus,
    config: &TrainingConfig,
) -> Result<PhraseModel, LexiconError> {
    if lexicon.variables().len() < 2 {
        return Err(LexiconError::TooFewVariables {
            needed: 2,
            found: lexicon.variables().len(),
        });
    }
    if corpus.sentence_count() == 0 {
        return Err(LexiconError::EmptyCorpus);
    }
    let positives: Vec<Vec<String>> = occurring_variable_forms(lexicon, corpus)
        .into_iter()
        .collect();
    if positives.is_empty() {
        return Err(LexiconError::NoTrainingSignal);
    }
    let pool: Vec<Vec<String>> = corpus_phrases(corpus, config.n_max)
        .into_iter()
        .filter(|p| lexicon.find_variable(&p.join(" ")).is_none())
        .filter(|p| !p.iter().all(|t| text::is_punctuation(t)))
        .collect();
    let wanted = ((positives.len() as f64) * config.negative_ratio).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picks = sample(&mut rng, pool.len(), wanted.min(pool.len())).into_vec();
    picks.sort_unstable();
    let negatives: Vec<&Vec<String>> = picks.iter().map(|&i| &pool[i]).collect();

    let mut features = BTreeMap::new();
    for sample in positives.iter().chain(negatives.iter().copied()) {
        for name in feature_names(sample) {
            let next = features.len();
            features.entry(name).or_insert(next);
        }
    }
    // Indices follow first appearance; re-number in key order for a canonical layout.
    for (i, v) in features.values_mut().enumerate() {
        *v = i;
    }
    let mut model = PhraseModel {
        weights: vec![0.0; features.len()],
        features,
        bias: 0.0,
        snapshot: TrainingSnapshot {
            id: String::new(),
            seed: config.seed,
            negative_ratio: config.negative_ratio,
            positives: positives.len(),
            negatives: negatives.len(),
            epochs: 0,
        },
    };

    let rows: Vec<(SparseRow, f64)> = positives
        .iter()
        .map(|p| (model.encode(p), 1.0))
        .chain(negatives.iter().map(|n| (model.encode(n), 0.0)))
        .collect();
    let n = rows.len() as f64;
    let n_pos = positives.len() as f64;
    let n_neg = negatives.len() as f64;
    let weight_of = |label: f64| {
        if label > 0.5 {
            n / (2.0 * n_pos)
        } else if n_neg > 0.0 {
            n / (2.0 * n_neg)
        } else {
            0.0
        }
    };

    let mut grad = vec![0.0; model.weights.len()];
    let mut epochs = 0;
    while epochs < config.max_epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        for (row, label) in &rows {
            let z: f64 = model.bias + row.iter().map(|&(i, v)| model.weights[i] * v).sum::<f64>();
            let residual = weight_of(*label) * (sigmoid(z) - label) / n;
            grad_bias += residual;
            for &(i, v) in row {
                grad[i] += residual * v;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * (g + config.l2 * *w);
        }
        model.bias -= config.learning_rate * grad_bias;
        epochs += 1;
        if epochs >= config.min_epochs
            && epochs % 50 == 0
            && positives.iter().all(|p| model.score_tokens(p) > 0.5)
        {
            break;
        }
    }
    let failing = positives
        .iter()
        .filter(|p| model.score_tokens(p) <= 0.5)
        .count();
    if failing > 0 {
        return Err(LexiconError::NotSeparated { failing });
    }

    let mut h = Fnv::default();
    h.write(&config.seed.to_le_bytes())
        .write(&config.negative_ratio.to_bits().to_le_bytes());
    for p in &positives {
        h.write(b"+").write(p.join(" ").as_bytes());
    }
    for q in &negatives {
        h.write(b"-").write(q.join(" ").as_bytes());
    }
    for w in &model.weights {
        h.write(&w.to_bits().to_le_bytes());
    }
    model.snapshot.epochs = epochs;
    model.snapshot.id = format!("{:016x}", h.finish());
    Ok(model)
}
