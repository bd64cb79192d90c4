//! The evolving variable set and relation-keyword set.
//!
//! Variables match by case-folded token sequence. Relation keywords match by
//! stemmed token sequence and may contain a `...` gap marker for split
//! constructions such as `make ... higher`; the gap-free form (`make higher`)
//! is the keyword's label in triples.

mod model;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::Matcher;
use crate::corpus::Corpus;
use crate::text;

pub use model::{train_phrase_model, PhraseModel, TrainingConfig, TrainingSnapshot};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Csv { file: String, message: String },
    #[error("unknown polarity label {0:?} (expected increase, decrease or neutral)")]
    UnknownPolarity(String),
    #[error("duplicate variable name or variant {0:?}")]
    DuplicateVariable(String),
    #[error("duplicate relation keyword {0:?}")]
    DuplicateRelation(String),
    #[error("empty name")]
    EmptyName,
    #[error("unknown relation keyword {0:?}")]
    UnknownRelation(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("lexicon needs at least {needed} variable entries, has {found}")]
    TooFewVariables { needed: usize, found: usize },
    #[error("no training signal: no known variable occurs in the corpus")]
    NoTrainingSignal,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("phrase model did not separate training positives ({failing} below 0.5)")]
    NotSeparated { failing: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Increase,
    Decrease,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Increase, Polarity::Decrease, Polarity::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Increase => "increase",
            Polarity::Decrease => "decrease",
            Polarity::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "increase" => Ok(Polarity::Increase),
            "decrease" => Ok(Polarity::Decrease),
            "neutral" => Ok(Polarity::Neutral),
            _ => Err(LexiconError::UnknownPolarity(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Seed,
    Bootstrapped,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableEntry {
    pub name: String,
    pub variants: Vec<String>,
    pub source: Source,
    pub frequency: u64,
}

impl VariableEntry {
    /// Name followed by variants.
    pub fn forms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.variants.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub keyword: String,
    pub polarity: Polarity,
    pub source: Source,
}

impl RelationEntry {
    /// Keyword with any gap marker removed, lowercased.
    pub fn label(&self) -> String {
        relation_label(&self.keyword)
    }

    pub fn pattern(&self) -> RelationPattern {
        RelationPattern::parse(&self.keyword)
    }
}

/// Stemmed token segments of a relation keyword; consecutive segments may be
/// separated by a bounded gap in the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationPattern {
    pub segments: Vec<Vec<String>>,
}

const GAP_MARKERS: [&str; 2] = ["...", "…"];

fn split_gaps(keyword: &str) -> Vec<&str> {
    let mut parts = vec![keyword];
    for marker in GAP_MARKERS {
        parts = parts.into_iter().flat_map(|p| p.split(marker)).collect();
    }
    parts.into_iter().filter(|p| !p.trim().is_empty()).collect()
}

impl RelationPattern {
    pub fn parse(keyword: &str) -> Self {
        let segments = split_gaps(keyword)
            .into_iter()
            .map(|seg| {
                text::folded_tokens(seg)
                    .iter()
                    .map(|t| text::stem(t))
                    .collect::<Vec<_>>()
            })
            .filter(|s| !s.is_empty())
            .collect();
        Self { segments }
    }

    pub fn token_count(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    /// Gap-insensitive lookup key.
    pub fn key(&self) -> String {
        self.segments
            .iter()
            .flatten()
            .cloned()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn relation_label(keyword: &str) -> String {
    text::entity_key(&split_gaps(keyword).join(" "))
}

/// Matching key for a variable form: folded tokens joined by single spaces.
pub fn variable_key(form: &str) -> String {
    text::folded_tokens(form).join(" ")
}

/// Relation lookup key for free text (stems, gap markers ignored).
pub fn relation_key(keyword: &str) -> String {
    RelationPattern::parse(keyword).key()
}

/// Candidates the editors have rejected; never proposed again.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectList {
    pub variables: BTreeSet<String>,
    pub relations: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    variables: Vec<VariableEntry>,
    relations: Vec<RelationEntry>,
    pub rejects: RejectList,
    #[serde(skip)]
    variable_index: HashMap<String, usize>,
    #[serde(skip)]
    relation_index: HashMap<String, usize>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variables(&self) -> &[VariableEntry] {
        &self.variables
    }

    pub fn relations(&self) -> &[RelationEntry] {
        &self.relations
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty() && self.relations.is_empty()
    }

    /// Rebuild lookup indexes, e.g. after deserialization.
    pub fn reindex(&mut self) -> Result<(), LexiconError> {
        let variables = std::mem::take(&mut self.variables);
        let relations = std::mem::take(&mut self.relations);
        self.variable_index.clear();
        self.relation_index.clear();
        for v in variables {
            let idx = self.add_variable(&v.name, v.variants.clone(), v.source)?;
            self.variables[idx].frequency = v.frequency;
        }
        for r in relations {
            self.add_relation(&r.keyword, r.polarity, r.source)?;
        }
        Ok(())
    }

    pub fn add_variable(
        &mut self,
        name: &str,
        variants: Vec<String>,
        source: Source,
    ) -> Result<usize, LexiconError> {
        let name = name.trim();
        let name_key = variable_key(name);
        if name_key.is_empty() {
            return Err(LexiconError::EmptyName);
        }
        let mut keys = vec![name_key];
        let mut kept = Vec::new();
        for variant in variants {
            let variant = variant.trim().to_string();
            let key = variable_key(&variant);
            if key.is_empty() {
                continue;
            }
            if keys.contains(&key) || self.variable_index.contains_key(&key) {
                return Err(LexiconError::DuplicateVariable(variant));
            }
            keys.push(key);
            kept.push(variant);
        }
        if self.variable_index.contains_key(&keys[0]) {
            return Err(LexiconError::DuplicateVariable(name.to_string()));
        }
        let idx = self.variables.len();
        for key in keys {
            self.variable_index.insert(key, idx);
        }
        self.variables.push(VariableEntry {
            name: name.to_string(),
            variants: kept,
            source,
            frequency: 0,
        });
        Ok(idx)
    }

    /// Attach `variant` to the entry that owns `canonical` (name or variant).
    pub fn add_variant(&mut self, canonical: &str, variant: &str) -> Result<usize, LexiconError> {
        let idx = self
            .find_variable(canonical)
            .ok_or_else(|| LexiconError::UnknownVariable(canonical.to_string()))?;
        let key = variable_key(variant);
        if key.is_empty() {
            return Err(LexiconError::EmptyName);
        }
        if self.variable_index.contains_key(&key) {
            return Err(LexiconError::DuplicateVariable(variant.to_string()));
        }
        self.variable_index.insert(key, idx);
        self.variables[idx].variants.push(variant.trim().to_string());
        Ok(idx)
    }

    pub fn add_relation(
        &mut self,
        keyword: &str,
        polarity: Polarity,
        source: Source,
    ) -> Result<usize, LexiconError> {
        let keyword = keyword.trim();
        let key = relation_key(keyword);
        if key.is_empty() {
            return Err(LexiconError::EmptyName);
        }
        if self.relation_index.contains_key(&key) {
            return Err(LexiconError::DuplicateRelation(keyword.to_string()));
        }
        let idx = self.relations.len();
        self.relation_index.insert(key, idx);
        self.relations.push(RelationEntry {
            keyword: keyword.to_string(),
            polarity,
            source,
        });
        Ok(idx)
    }

    /// Index of the variable entry owning `form` as name or variant.
    pub fn find_variable(&self, form: &str) -> Option<usize> {
        self.variable_index.get(&variable_key(form)).copied()
    }

    pub fn find_relation(&self, keyword: &str) -> Option<usize> {
        self.relation_index.get(&relation_key(keyword)).copied()
    }

    pub fn classify_relation_polarity(&self, keyword: &str) -> Result<Polarity, LexiconError> {
        self.find_relation(keyword)
            .map(|i| self.relations[i].polarity)
            .ok_or_else(|| LexiconError::UnknownRelation(keyword.to_string()))
    }

    /// Every (form key, entry index) pair for variables.
    pub fn variable_keys(&self) -> impl Iterator<Item = (&str, usize)> {
        self.variable_index.iter().map(|(k, &i)| (k.as_str(), i))
    }

    pub fn variant_count(&self) -> usize {
        self.variables.iter().map(|v| v.variants.len()).sum()
    }

    /// (name, variant) pairs, the co-reference knowledge the lexicon carries.
    pub fn alias_pairs(&self) -> Vec<(String, String)> {
        self.variables
            .iter()
            .flat_map(|v| v.variants.iter().map(move |a| (v.name.clone(), a.clone())))
            .collect()
    }

    /// Recount corpus occurrences of each variable entry.
    pub fn refresh_frequencies(&mut self, corpus: &Corpus) {
        let matcher = Matcher::new(self);
        let mut counts = vec![0u64; self.variables.len()];
        for sentence in corpus.sentences() {
            for m in matcher.annotate(sentence).variables {
                counts[m.entry] += 1;
            }
        }
        for (entry, count) in self.variables.iter_mut().zip(counts) {
            entry.frequency = count;
        }
    }

    /// Lexicon name/variant uniqueness and relation-key uniqueness.
    pub fn check_invariants(&self) -> Result<(), LexiconError> {
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if v.name.trim().is_empty() {
                return Err(LexiconError::EmptyName);
            }
            for form in v.forms() {
                if !seen.insert(variable_key(form)) {
                    return Err(LexiconError::DuplicateVariable(form.to_string()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            if !seen.insert(relation_key(&r.keyword)) {
                return Err(LexiconError::DuplicateRelation(r.keyword.clone()));
            }
        }
        Ok(())
    }

    pub fn load_seed_lexicons(
        variables_path: &Path,
        relations_path: &Path,
    ) -> Result<Self, LexiconError> {
        let open = |p: &Path| {
            File::open(p).map_err(|source| LexiconError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        Self::from_seed_readers(open(variables_path)?, open(relations_path)?)
    }

    pub fn from_seed_readers<V: Read, R: Read>(
        variables: V,
        relations: R,
    ) -> Result<Self, LexiconError> {
        let mut lexicon = Self::new();
        for (name, variants) in read_rows(variables, "variables.csv", ["name", "variants"])? {
            let variants = variants
                .split('|')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            lexicon.add_variable(&name, variants, Source::Seed)?;
        }
        for (keyword, polarity) in read_rows(relations, "relations.csv", ["keyword", "polarity"])? {
            lexicon.add_relation(&keyword, polarity.parse()?, Source::Seed)?;
        }
        Ok(lexicon)
    }

    pub fn write_variables_csv<W: Write>(&self, out: W) -> Result<(), LexiconError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| LexiconError::Csv {
            file: "variables.csv".into(),
            message: e.to_string(),
        };
        w.write_record(["name", "variants"]).map_err(err)?;
        for v in &self.variables {
            w.write_record([v.name.as_str(), v.variants.join("|").as_str()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))
    }

    pub fn write_relations_csv<W: Write>(&self, out: W) -> Result<(), LexiconError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| LexiconError::Csv {
            file: "relations.csv".into(),
            message: e.to_string(),
        };
        w.write_record(["keyword", "polarity"]).map_err(err)?;
        for r in &self.relations {
            w.write_record([r.keyword.as_str(), r.polarity.as_str()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))
    }
}

fn read_rows<R: Read>(
    input: R,
    file: &str,
    header: [&str; 2],
) -> Result<Vec<(String, String)>, LexiconError> {
    let csv_err = |message: String| LexiconError::Csv {
        file: file.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let found = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if found.len() < 2 || found.get(0) != Some(header[0]) || found.get(1) != Some(header[1]) {
        if found.is_empty() {
            return Ok(Vec::new());
        }
        return Err(csv_err(format!(
            "expected header `{},{}`",
            header[0], header[1]
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let first = record.get(0).unwrap_or_default().to_string();
        if first.is_empty() && record.iter().all(str::is_empty) {
            continue;
        }
        if first.is_empty() {
            return Err(csv_err(format!("row {}: empty {}", i + 2, header[0])));
        }
        rows.push((first, record.get(1).unwrap_or_default().to_string()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEED_VARIABLES: &str = "name,variants\n\
        GDP,output|economic growth\n\
        Investment,\n\
        Housing price,housing market|real estate market|real estate price\n\
        RMB Exchange Rate,RMB\n\
        Inflation,CPI\n";

    fn seeds(relations: &str) -> Result<Lexicon, LexiconError> {
        Lexicon::from_seed_readers(SEED_VARIABLES.as_bytes(), relations.as_bytes())
    }

    #[test]
    fn seed_variables_load_verbatim() {
        let lex = seeds("keyword,polarity\n").unwrap();
        assert_eq!(lex.variables().len(), 5);
        assert_eq!(lex.variant_count(), 7);
        assert!(lex.relations().is_empty());
        assert!(lex.variables().iter().all(|v| v.source == Source::Seed));
        assert_eq!(lex.find_variable("cpi"), lex.find_variable("Inflation"));
    }

    #[test]
    fn relation_row_parses_polarity() {
        let lex = seeds("keyword,polarity\npush up,increase\n").unwrap();
        assert_eq!(lex.relations()[0].polarity, Polarity::Increase);
        assert_eq!(lex.classify_relation_polarity("pushed up").unwrap(), Polarity::Increase);
    }

    #[test]
    fn unknown_polarity_and_duplicates_fail() {
        assert!(matches!(
            seeds("keyword,polarity\nraise,upward\n"),
            Err(LexiconError::UnknownPolarity(_))
        ));
        assert!(matches!(
            seeds("keyword,polarity\nraise,increase\nRaise,decrease\n"),
            Err(LexiconError::DuplicateRelation(_))
        ));
        let dup = "name,variants\nGDP,output\nOutput,\n";
        assert!(matches!(
            Lexicon::from_seed_readers(dup.as_bytes(), "keyword,polarity\n".as_bytes()),
            Err(LexiconError::DuplicateVariable(_))
        ));
    }

    #[test]
    fn gapped_keyword_classifies_by_label() {
        let lex = seeds(
            "keyword,polarity\nincrease,increase\nresulted in the increase,increase\npush up,increase\nmake ... higher,increase\n",
        )
        .unwrap();
        for kw in ["resulted in the increase", "make higher", "push up", "increase"] {
            assert_eq!(lex.classify_relation_polarity(kw).unwrap(), Polarity::Increase);
        }
        assert_eq!(lex.relations()[3].label(), "make higher");
        assert!(matches!(
            lex.classify_relation_polarity("lower"),
            Err(LexiconError::UnknownRelation(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let lex = seeds("keyword,polarity\nmake ... higher,increase\ndrag down,decrease\n").unwrap();
        let mut vars = Vec::new();
        let mut rels = Vec::new();
        lex.write_variables_csv(&mut vars).unwrap();
        lex.write_relations_csv(&mut rels).unwrap();
        let back = Lexicon::from_seed_readers(vars.as_slice(), rels.as_slice()).unwrap();
        assert_eq!(back.variables(), lex.variables());
        assert_eq!(back.relations(), lex.relations());
    }

    #[test]
    fn add_variant_respects_uniqueness() {
        let mut lex = seeds("keyword,polarity\n").unwrap();
        lex.add_variant("inflation", "consumer price index").unwrap();
        assert!(lex.add_variant("gdp", "Consumer Price Index").is_err());
        assert!(lex.add_variant("nothing", "x").is_err());
        lex.check_invariants().unwrap();
    }
}
