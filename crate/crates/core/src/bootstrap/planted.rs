//! Synthetic corpora with a known set of planted variables and relation
//! keywords, and an editor that answers truthfully about them.

use std::collections::{BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Adjudicator, BootstrapError, CandidateBatch, CandidateKind, LabelDecision};
use crate::corpus::Corpus;
use crate::lexicon::{relation_key, variable_key, Lexicon, Polarity, Source};

pub const SEED_VARIABLES: [&str; 4] = ["cement output", "egg price", "loan rate", "export volume"];

pub const PLANTED_VARIABLES: [&str; 20] = [
    "coal output",
    "steel output",
    "power output",
    "crude oil output",
    "pork price",
    "grain price",
    "land price",
    "copper price",
    "deposit rate",
    "mortgage rate",
    "interbank rate",
    "bond rate",
    "retail sales volume",
    "car sales volume",
    "freight volume",
    "import volume",
    "rail cargo volume",
    "home sales volume",
    "fertilizer price",
    "chip output",
];

/// (keyword, polarity, inflected surface forms)
pub const SEED_RELATIONS: [(&str, Polarity, &[&str]); 2] = [
    ("push up", Polarity::Increase, &["pushed up", "pushes up"]),
    ("drag down", Polarity::Decrease, &["dragged down", "drags down"]),
];

pub const PLANTED_RELATIONS: [(&str, Polarity, &[&str]); 6] = [
    ("boost", Polarity::Increase, &["boosted", "boosts"]),
    ("lift", Polarity::Increase, &["lifted", "lifts"]),
    ("depress", Polarity::Decrease, &["depressed", "depresses"]),
    ("weigh on", Polarity::Decrease, &["weighed on", "weighs on"]),
    ("correlate with", Polarity::Neutral, &["correlated with", "correlates with"]),
    ("spill over to", Polarity::Neutral, &["spilled over to", "spills over to"]),
];

const OPENERS: [&str; 5] = ["", "In March", "Analysts noted that", "Last year", "Officials said"];
const ADVERBS: [&str; 4] = ["", "sharply", "steadily", "again"];
const CLOSERS: [&str; 5] = [
    "",
    "in the second quarter",
    "according to the survey",
    "this winter",
    "across several provinces",
];

pub struct Planted {
    pub corpus: Corpus,
    pub seeds: Lexicon,
}

impl Planted {
    /// Planted names missing from `lexicon`.
    pub fn missing_variables(lexicon: &Lexicon) -> Vec<&'static str> {
        PLANTED_VARIABLES
            .iter()
            .copied()
            .filter(|v| lexicon.find_variable(v).is_none())
            .collect()
    }

    pub fn missing_relations(lexicon: &Lexicon) -> Vec<&'static str> {
        PLANTED_RELATIONS
            .iter()
            .map(|r| r.0)
            .filter(|r| lexicon.find_relation(r).is_none())
            .collect()
    }
}

/// `sentences` random statements `[opener] V1 [adverb] REL V2 [closer].`
/// over all seed and planted items, one document per ten sentences.
pub fn planted_corpus(seed: u64, sentences: usize) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variables: Vec<&str> = SEED_VARIABLES.iter().chain(&PLANTED_VARIABLES).copied().collect();
    let relations: Vec<&[&str]> = SEED_RELATIONS
        .iter()
        .chain(&PLANTED_RELATIONS)
        .map(|r| r.2)
        .collect();
    let mut docs: Vec<(String, String)> = Vec::new();
    for i in 0..sentences {
        // Cycle through every variable and relation before sampling freely.
        let a = if i < variables.len() { i } else { rng.random_range(0..variables.len()) };
        let mut b = rng.random_range(0..variables.len() - 1);
        if b >= a {
            b += 1;
        }
        let r = relations[i % relations.len()];
        let mut words: Vec<&str> = Vec::new();
        let opener = *OPENERS.choose(&mut rng).expect("non-empty");
        words.extend([opener, variables[a], *ADVERBS.choose(&mut rng).expect("non-empty")]);
        words.push(r.choose(&mut rng).expect("non-empty"));
        words.extend([variables[b], *CLOSERS.choose(&mut rng).expect("non-empty")]);
        let sentence = words
            .into_iter()
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        let mut chars = sentence.chars();
        let sentence = match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect::<String>(),
            None => sentence,
        };
        if i % 10 == 0 {
            docs.push((format!("p{:03}", i / 10), String::new()));
        }
        let text = &mut docs.last_mut().expect("pushed above").1;
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&sentence);
        text.push('.');
    }
    let corpus = Corpus::from_texts(docs).expect("unique ids");
    let mut seeds = Lexicon::new();
    for v in SEED_VARIABLES {
        seeds.add_variable(v, Vec::new(), Source::Seed).expect("distinct seeds");
    }
    for (k, p, _) in SEED_RELATIONS {
        seeds.add_relation(k, p, Source::Seed).expect("distinct seeds");
    }
    Planted { corpus, seeds }
}

/// Accepts exactly the planted items (with their true polarity) and
/// rejects everything else.
pub struct TruthfulEditor {
    variables: BTreeSet<String>,
    relations: HashMap<String, Polarity>,
}

impl Default for TruthfulEditor {
    fn default() -> Self {
        Self {
            variables: PLANTED_VARIABLES.iter().map(|v| variable_key(v)).collect(),
            relations: PLANTED_RELATIONS
                .iter()
                .map(|(k, p, _)| (relation_key(k), *p))
                .collect(),
        }
    }
}

impl Adjudicator for TruthfulEditor {
    fn decide(
        &mut self,
        batch: &CandidateBatch,
        _lexicon: &Lexicon,
    ) -> Result<Vec<LabelDecision>, BootstrapError> {
        Ok(batch
            .items
            .iter()
            .map(|item| match batch.kind {
                CandidateKind::Variable if self.variables.contains(&variable_key(&item.text)) => {
                    LabelDecision::accept_variable(&item.text)
                }
                CandidateKind::Relation => match self.relations.get(&relation_key(&item.text)) {
                    Some(&p) => LabelDecision::accept_relation(&item.text, p),
                    None => LabelDecision::reject(&item.text, batch.kind),
                },
                kind => LabelDecision::reject(&item.text, kind),
            })
            .collect())
    }
}
